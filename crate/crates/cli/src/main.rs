use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facetbandit::env::bandit_env::StochasticBanditEnv;
use facetbandit::runner::{self, ExperimentConfig, RunSummary, Scheduler, SweepGrid, TaskConfig};
use facetbandit::samplers::Temperature;
use facetbandit::{Error, RewardKind};

const OUTPUT_ROOT_ENV: &str = "FACETBANDIT_OUTPUT_ROOT";

/// EXP3 curriculum scheduling over faceted training data.
#[derive(Parser)]
#[command(name = "facetbandit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with a scheduler and write logs and summaries.
    Run(ConfigArgs),
    /// Grid search over bandit learning and exploration rates.
    Sweep(SweepArgs),
    /// Play EXP3 on a stochastic bandit and report pseudo-regret.
    Regret(RegretArgs),
    /// Aggregate finished runs into CSV tables.
    Report(ReportArgs),
}

/// Config file plus per-field overrides.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply to missing fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// exp3, mixed, uniform, proportional, upsampled, inverse-proportional
    /// or tau=<value>.
    #[arg(long)]
    scheduler: Option<Scheduler>,
    /// Static temperature schedule; shorthand for `--scheduler tau=<value>`.
    #[arg(long, conflicts_with = "scheduler", allow_hyphen_values = true)]
    tau: Option<Temperature>,
    /// loss, pg, pgnorm, dev-loss, dev-pg or dev-pgnorm.
    #[arg(long)]
    reward: Option<RewardKind>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, alias = "batch_size")]
    batch_size: Option<usize>,
    #[arg(long, alias = "eval_batch_size")]
    eval_batch_size: Option<usize>,
    #[arg(long, aliases = ["exploration_rate", "gamma"])]
    exploration_rate: Option<f64>,
    #[arg(long, aliases = ["learning_rate", "mu"])]
    learning_rate: Option<f64>,
    #[arg(long, alias = "weight_cap")]
    weight_cap: Option<f64>,
    #[arg(long, alias = "eval_every")]
    eval_every: Option<u64>,
    #[arg(long)]
    replicas: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, alias = "output_dir")]
    output_dir: Option<PathBuf>,
    /// surrogate, separable, dir:<path> or bandit:<mean>,<mean>,...
    #[arg(long)]
    task: Option<String>,
    /// Root that relative output directories are resolved against.
    #[arg(long, alias = "output_root", env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Bandit learning rates to try.
    #[arg(long, value_delimiter = ',', default_values_t = runner::config::DEFAULT_LR_GRID)]
    learning_rates: Vec<f64>,
    /// Exploration rates to try.
    #[arg(long, value_delimiter = ',', default_values_t = runner::config::DEFAULT_EXPLORATION_GRID)]
    exploration_rates: Vec<f64>,
    /// Maximum steps per cell.
    #[arg(long, default_value_t = runner::config::DEFAULT_SWEEP_HORIZON)]
    horizon: u64,
    /// Keep results in memory and only print the ranking.
    #[arg(long)]
    no_logs: bool,
}

#[derive(Args)]
struct RegretArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Explicit arm means; overrides --arms/--best/--rest.
    #[arg(long, value_delimiter = ',')]
    means: Option<Vec<f64>>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    best: Option<f64>,
    #[arg(long)]
    rest: Option<f64>,
    /// Gaussian payoffs with this standard deviation instead of Bernoulli.
    #[arg(long)]
    gaussian_sd: Option<f64>,
    /// Feed payoffs through the quantile rescaler.
    #[arg(long)]
    rescale: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to aggregate.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Destination directory for the CSV tables.
    #[arg(long, short, default_value = "report")]
    out: PathBuf,
    #[arg(long, alias = "output_root", env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
}

fn resolve(root: Option<&Path>, path: &Path) -> PathBuf {
    match root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scheduler {
            cfg.scheduler = s;
        }
        if let Some(t) = self.tau {
            cfg.scheduler = Scheduler::Static(t);
        }
        if let Some(r) = self.reward {
            cfg.reward = r;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            steps,
            batch_size,
            eval_batch_size,
            exploration_rate,
            learning_rate,
            weight_cap,
            eval_every,
            replicas,
            seed,
            output_dir
        );
        if let Some(task) = &self.task {
            cfg.task = TaskConfig::parse_short(task)?;
        }
        cfg.output_dir = resolve(self.output_root.as_deref(), &cfg.output_dir);
        Ok(cfg)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5}")).unwrap_or_else(|| "-".into())
}

fn print_summary(summary: &RunSummary) {
    println!(
        "{} / {} on {} ({} steps, {} replicas)",
        summary.scheduler,
        summary.reward,
        summary.task,
        summary.steps,
        summary.replicas.len()
    );
    println!("facets: {}", summary.facet_names.join(" "));
    for r in &summary.replicas {
        let status = match &r.status {
            runner::ReplicaStatus::Completed => "ok".to_string(),
            runner::ReplicaStatus::Aborted { step, reason } => {
                format!("aborted at step {step}: {reason}")
            }
        };
        let fractions: Vec<String> = r.play_fractions.iter().map(|f| format!("{f:.3}")).collect();
        println!(
            "replica {:>3}: {status}; final {} best {} (step {}) regret {} plays [{}]",
            r.replica,
            fmt_opt(r.final_dev_loss),
            fmt_opt(r.best_dev_loss),
            r.best_step
                .map(|s| s.to_string())
                .unwrap_or_else(|| "-".into()),
            fmt_opt(r.regret),
            fractions.join(" ")
        );
    }
}

enum Outcome {
    Ok,
    Aborted,
}

fn cmd_run(args: &ConfigArgs) -> Result<Outcome, Error> {
    let cfg = args.build()?;
    cfg.validate()?;
    let summary = runner::run(&cfg)?;
    print_summary(&summary);
    println!("wrote {}", cfg.output_dir.display());
    Ok(if summary.aborted() {
        Outcome::Aborted
    } else {
        Outcome::Ok
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<Outcome, Error> {
    let cfg = args.config.build()?;
    let grid = SweepGrid {
        learning_rates: args.learning_rates.clone(),
        exploration_rates: args.exploration_rates.clone(),
        horizon: args.horizon,
    };
    let rows = runner::sweep(&cfg, &grid, !args.no_logs)?;
    println!("rank  learning_rate  exploration_rate  metric      status");
    for r in &rows {
        println!(
            "{:>4}  {:>13}  {:>16}  {:>10}  {}",
            r.rank,
            r.learning_rate,
            r.exploration_rate,
            fmt_opt(r.metric),
            r.status
        );
    }
    Ok(if rows.iter().all(|r| r.failed()) {
        Outcome::Aborted
    } else {
        Outcome::Ok
    })
}

fn cmd_regret(args: &RegretArgs) -> Result<Outcome, Error> {
    let mut cfg = args.config.build()?;
    cfg.scheduler = Scheduler::Exp3;
    let explicit = args.means.is_some()
        || args.arms.is_some()
        || args.best.is_some()
        || args.rest.is_some()
        || args.gaussian_sd.is_some();
    if explicit || !cfg.task.is_bandit() {
        let means = match &args.means {
            Some(m) => m.clone(),
            None => {
                let (n, best, rest) = (
                    args.arms.unwrap_or(10),
                    args.best.unwrap_or(0.7),
                    args.rest.unwrap_or(0.5),
                );
                StochasticBanditEnv::one_best_bernoulli(n, best, rest)?.means
            }
        };
        let env = match args.gaussian_sd {
            Some(sd) => StochasticBanditEnv::gaussian(means, sd)?,
            None => StochasticBanditEnv::bernoulli(means)?,
        };
        cfg.task = TaskConfig::Bandit {
            env,
            rescale: args.rescale,
        };
    } else if let TaskConfig::Bandit { rescale, .. } = &mut cfg.task {
        *rescale |= args.rescale;
    }
    cfg.validate()?;
    let summary = runner::run(&cfg)?;
    print_summary(&summary);
    let regrets: Vec<f64> = summary.replicas.iter().filter_map(|r| r.regret).collect();
    let n = summary.n_arms as f64;
    let bound = 8.0 * (cfg.steps as f64 * n * n.ln()).sqrt();
    println!(
        "mean regret {:.2} +- {:.2} over {} replicas; 8*sqrt(T n ln n) = {bound:.1}",
        facetbandit::stats::mean(&regrets),
        facetbandit::stats::std_dev(&regrets),
        regrets.len()
    );
    println!("wrote {}", cfg.output_dir.display());
    Ok(Outcome::Ok)
}

fn cmd_report(args: &ReportArgs) -> Result<Outcome, Error> {
    let out = resolve(args.output_root.as_deref(), &args.out);
    let reports = runner::report(&args.runs, &out)?;
    for r in &reports {
        let a = &r.row;
        println!(
            "{}: {} / {} completed {}/{}; final {} +- {} best {} regret {}",
            a.run,
            a.scheduler,
            a.reward,
            a.completed,
            a.replicas,
            fmt_opt(a.final_dev_loss_mean),
            fmt_opt(a.final_dev_loss_std),
            fmt_opt(a.best_dev_loss_mean),
            fmt_opt(a.regret_mean)
        );
    }
    println!("wrote {}", out.display());
    Ok(Outcome::Ok)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Aggregation(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Regret(a) => cmd_regret(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Aborted) => {
            eprintln!("error: at least one replica aborted");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
