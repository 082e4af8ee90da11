use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scheduler, TaskConfig};
use crate::env::dataset::FacetedDataset;
use crate::env::learner::Learner;
use crate::env::surrogate::{
    generate_task, make_learner, make_surrogate_learner, SurrogateTaskSpec,
};
use crate::env::{
    run_curriculum_step, run_mixed_step, run_static_step, BanditTestbed, BatchSizes, StepRecord,
};
use crate::error::{Error, Result};
use crate::rewards::RewardWindow;
use crate::rng::{self, ReplicaStreams, StreamRole};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";

pub fn replica_log_name(replica: u32) -> String {
    format!("replica_{replica:03}.jsonl")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ReplicaStatus {
    Completed,
    Aborted { step: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevPoint {
    pub step: u64,
    pub loss: f64,
}

/// Outcome of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: u32,
    #[serde(flatten)]
    pub status: ReplicaStatus,
    pub steps_completed: u64,
    /// Training examples per facet (pulls per arm on bandit tasks).
    pub play_counts: Vec<u64>,
    pub play_fractions: Vec<f64>,
    pub final_dev_loss: Option<f64>,
    pub best_dev_loss: Option<f64>,
    /// Step after which the best dev loss was measured.
    pub best_step: Option<u64>,
    /// Cumulative pseudo-regret, bandit tasks only.
    pub regret: Option<f64>,
    pub dev_curve: Vec<DevPoint>,
}

impl ReplicaSummary {
    pub fn is_completed(&self) -> bool {
        self.status == ReplicaStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub reward: String,
    pub task: String,
    pub steps: u64,
    pub n_arms: usize,
    pub facet_names: Vec<String>,
    pub replicas: Vec<ReplicaSummary>,
}

impl RunSummary {
    pub fn aborted(&self) -> bool {
        self.replicas.iter().any(|r| !r.is_completed())
    }
}

/// Shared, read-only inputs for every replica of a run.
struct Prepared {
    directory: Option<FacetedDataset>,
}

enum World {
    Curriculum {
        dataset: FacetedDataset,
        learner: Box<dyn Learner>,
    },
    Bandit(Box<BanditTestbed>),
}

fn build_world(config: &ExperimentConfig, prepared: &Prepared, replica: u32) -> Result<World> {
    let mut task_rng = rng::stream(config.seed, replica, StreamRole::Task);
    let mut init_rng = rng::stream(config.seed, replica, StreamRole::LearnerInit);
    let surrogate =
        |spec: &SurrogateTaskSpec, task_rng: &mut _, init_rng: &mut _| -> Result<World> {
            let task = generate_task(spec, task_rng)?;
            let learner = make_surrogate_learner(spec, init_rng)?;
            Ok(World::Curriculum {
                dataset: task.dataset,
                learner,
            })
        };
    match &config.task {
        TaskConfig::Surrogate(spec) => surrogate(spec, &mut task_rng, &mut init_rng),
        TaskConfig::Separable => surrogate(
            &SurrogateTaskSpec::separable(),
            &mut task_rng,
            &mut init_rng,
        ),
        TaskConfig::Directory {
            model,
            sgd_lr,
            init_scale,
            ..
        } => {
            let dataset = prepared
                .directory
                .clone()
                .expect("directory dataset is loaded before replicas start");
            let learner = make_learner(*model, dataset.dim(), *sgd_lr, *init_scale, &mut init_rng)?;
            Ok(World::Curriculum { dataset, learner })
        }
        TaskConfig::Bandit { env, rescale } => {
            let exp3 = config.exp3_config(env.n_arms())?;
            Ok(World::Bandit(Box::new(BanditTestbed::new(
                env.clone(),
                exp3,
                *rescale,
            )?)))
        }
    }
}

fn arms_and_names(config: &ExperimentConfig, prepared: &Prepared) -> Result<(usize, Vec<String>)> {
    let names: Vec<String> = match &config.task {
        TaskConfig::Surrogate(spec) => spec.facets.iter().map(|f| f.name.clone()).collect(),
        TaskConfig::Separable => SurrogateTaskSpec::separable()
            .facets
            .iter()
            .map(|f| f.name.clone())
            .collect(),
        TaskConfig::Directory { .. } => prepared
            .directory
            .as_ref()
            .expect("loaded")
            .names()
            .to_vec(),
        TaskConfig::Bandit { env, .. } => (0..env.n_arms()).map(|a| format!("arm{a}")).collect(),
    };
    Ok((names.len(), names))
}

/// Runs one replica, streaming a JSON line per step into `log` when given.
///
/// Learner divergence is reported in the summary status rather than as an
/// error; other failures are returned.
pub fn run_replica(
    config: &ExperimentConfig,
    replica: u32,
    log: Option<&mut dyn Write>,
) -> Result<ReplicaSummary> {
    config.validate()?;
    let prepared = Prepared {
        directory: config.load_directory()?,
    };
    run_replica_prepared(config, &prepared, replica, log)
}

fn run_replica_prepared(
    config: &ExperimentConfig,
    prepared: &Prepared,
    replica: u32,
    mut log: Option<&mut dyn Write>,
) -> Result<ReplicaSummary> {
    let mut streams = ReplicaStreams::new(config.seed, replica);
    let world = build_world(config, prepared, replica)?;
    let mut summary = ReplicaSummary {
        replica,
        status: ReplicaStatus::Completed,
        steps_completed: 0,
        play_counts: Vec::new(),
        play_fractions: Vec::new(),
        final_dev_loss: None,
        best_dev_loss: None,
        best_step: None,
        regret: None,
        dev_curve: Vec::new(),
    };

    let mut emit = |record: &StepRecord| -> Result<()> {
        if let Some(w) = log.as_deref_mut() {
            serde_json::to_writer(&mut *w, record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    };

    match world {
        World::Bandit(mut bed) => {
            summary.play_counts = vec![0; bed.env.n_arms()];
            for _ in 0..config.steps {
                let record = bed.step_record(&mut streams.scheduler, &mut streams.payoff)?;
                summary.play_counts[record.arm.expect("bandit records carry an arm")] += 1;
                summary.steps_completed += 1;
                emit(&record)?;
            }
            summary.regret = Some(bed.cumulative_regret());
        }
        World::Curriculum {
            dataset,
            mut learner,
        } => {
            let n = dataset.n_facets();
            summary.play_counts = vec![0; n];
            let dev_all: Vec<_> = dataset.dev().iter().collect();
            let static_dist = config.static_distribution(&dataset.counts())?;
            let exp3 = match config.scheduler {
                Scheduler::Exp3 => Some(config.exp3_config(n)?),
                _ => None,
            };
            let mut state = match &exp3 {
                Some(c) => Some(crate::bandit::Exp3State::new(c)?),
                None => None,
            };
            let mut window = RewardWindow::new();
            let sizes = BatchSizes {
                train: config.batch_size,
                eval: config.eval_batch_size,
            };

            for step in 0..config.steps {
                let outcome = match config.scheduler {
                    Scheduler::Exp3 => run_curriculum_step(
                        state.as_mut().expect("bandit state"),
                        exp3.as_ref().expect("bandit config"),
                        learner.as_mut(),
                        &dataset,
                        config.reward,
                        &mut window,
                        &mut streams,
                        sizes,
                    )
                    .inspect(|r| {
                        let arm = r.arm.expect("arm");
                        summary.play_counts[arm] += config.batch_size as u64;
                    }),
                    Scheduler::Static(_) => run_static_step(
                        step,
                        static_dist.as_ref().expect("static distribution"),
                        learner.as_mut(),
                        &dataset,
                        &mut streams,
                        config.batch_size,
                    )
                    .inspect(|r| {
                        summary.play_counts[r.arm.expect("arm")] += config.batch_size as u64;
                    }),
                    Scheduler::Mixed => run_mixed_step(
                        step,
                        static_dist.as_ref().expect("corpus distribution"),
                        learner.as_mut(),
                        &dataset,
                        &mut streams,
                        config.batch_size,
                    )
                    .map(|(r, facets)| {
                        for f in facets {
                            summary.play_counts[f] += 1;
                        }
                        r
                    }),
                };
                let mut record = match outcome {
                    Ok(r) => r,
                    Err(Error::Diverged { step, detail }) => {
                        summary.status = ReplicaStatus::Aborted {
                            step,
                            reason: detail,
                        };
                        break;
                    }
                    Err(Error::Arithmetic(detail)) => {
                        summary.status = ReplicaStatus::Aborted {
                            step,
                            reason: detail,
                        };
                        break;
                    }
                    Err(e) => return Err(e),
                };

                let last = step + 1 == config.steps;
                if (step + 1) % config.eval_every == 0 || last {
                    let loss = learner.eval(&dev_all);
                    if !loss.is_finite() {
                        summary.status = ReplicaStatus::Aborted {
                            step,
                            reason: format!("dev loss is {loss}"),
                        };
                        break;
                    }
                    record.dev_loss = Some(loss);
                    summary.dev_curve.push(DevPoint {
                        step: step + 1,
                        loss,
                    });
                    summary.final_dev_loss = Some(loss);
                    if summary.best_dev_loss.is_none_or(|b| loss < b) {
                        summary.best_dev_loss = Some(loss);
                        summary.best_step = Some(step + 1);
                    }
                }
                summary.steps_completed += 1;
                emit(&record)?;
            }
        }
    }

    let total: u64 = summary.play_counts.iter().sum();
    summary.play_fractions = summary
        .play_counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect();
    Ok(summary)
}

/// Runs every replica in memory without writing logs.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<RunSummary> {
    execute(config, None)
}

/// Runs all replicas, writing per-replica JSONL logs, the resolved config and
/// summaries (JSON and CSV) into `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    execute(config, Some(&config.output_dir))
}

fn execute(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let prepared = Prepared {
        directory: config.load_directory()?,
    };
    let (n_arms, facet_names) = arms_and_names(config, &prepared)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), config.to_toml_string())?;
    }

    let replicas = (0..config.replicas)
        .into_par_iter()
        .map(|replica| match out_dir {
            Some(dir) => {
                let file = File::create(dir.join(replica_log_name(replica)))?;
                let mut writer = BufWriter::new(file);
                let summary = run_replica_prepared(config, &prepared, replica, Some(&mut writer))?;
                writer.flush()?;
                Ok(summary)
            }
            None => run_replica_prepared(config, &prepared, replica, None),
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = RunSummary {
        scheduler: config.scheduler.to_string(),
        reward: config.reward.to_string(),
        task: config.task.label().to_string(),
        steps: config.steps,
        n_arms,
        facet_names,
        replicas,
    };
    if let Some(dir) = out_dir {
        write_summary(dir, &summary)?;
    }
    Ok(summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<()> {
    let json = File::create(dir.join(SUMMARY_JSON))?;
    serde_json::to_writer_pretty(BufWriter::new(json), summary)?;

    let mut csv = csv::Writer::from_path(dir.join(SUMMARY_CSV))?;
    let mut header: Vec<String> = [
        "replica",
        "status",
        "steps_completed",
        "final_dev_loss",
        "best_dev_loss",
        "best_step",
        "regret",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for name in &summary.facet_names {
        header.push(format!("count_{name}"));
    }
    for name in &summary.facet_names {
        header.push(format!("fraction_{name}"));
    }
    csv.write_record(&header)?;
    for r in &summary.replicas {
        let status = match &r.status {
            ReplicaStatus::Completed => "completed".to_string(),
            ReplicaStatus::Aborted { step, .. } => format!("aborted@{step}"),
        };
        let mut row = vec![
            r.replica.to_string(),
            status,
            r.steps_completed.to_string(),
            fmt_opt(r.final_dev_loss),
            fmt_opt(r.best_dev_loss),
            r.best_step.map(|s| s.to_string()).unwrap_or_default(),
            fmt_opt(r.regret),
        ];
        row.extend(r.play_counts.iter().map(|c| c.to_string()));
        row.extend(r.play_fractions.iter().map(|f| f.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let file = File::open(dir.join(SUMMARY_JSON))
        .map_err(|e| Error::Aggregation(format!("{}: no completed run ({e})", dir.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
