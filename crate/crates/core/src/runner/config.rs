use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandit::{Distribution, Exp3Config, DEFAULT_WEIGHT_CAP};
use crate::env::dataset::FacetedDataset;
use crate::env::surrogate::{ModelKind, SurrogateTaskSpec};
use crate::env::{PayoffKind, StochasticBanditEnv};
use crate::error::{Error, Result};
use crate::rewards::{RewardKind, DEFAULT_EVAL_BATCH};
use crate::samplers::{temperature_distribution, FacetCounts, Preset, Temperature};

/// Default bandit learning-rate grid for sweeps.
pub const DEFAULT_LR_GRID: [f64; 3] = [0.001, 0.01, 0.1];
/// Default exploration-rate grid for sweeps.
pub const DEFAULT_EXPLORATION_GRID: [f64; 6] = [0.1, 0.2, 0.25, 0.3, 0.4, 0.5];
/// Sweep cells are truncated to this many steps unless configured otherwise.
pub const DEFAULT_SWEEP_HORIZON: u64 = 50_000;

/// How facets are chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheduler {
    Exp3,
    /// Fixed temperature distribution, one facet per batch.
    Static(Temperature),
    /// Batches drawn from the shuffled concatenation of all facets.
    Mixed,
}

impl Scheduler {
    pub fn is_bandit(&self) -> bool {
        matches!(self, Scheduler::Exp3)
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheduler::Exp3 => f.write_str("exp3"),
            Scheduler::Mixed => f.write_str("mixed"),
            Scheduler::Static(t) => match Preset::ALL.iter().find(|p| p.temperature() == *t) {
                Some(p) => f.write_str(p.name()),
                None => write!(f, "tau={t}"),
            },
        }
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    /// Accepts `exp3`, `mixed`, a preset name, `static` (uniform),
    /// `static:<preset>` or `tau=<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "exp3" => return Ok(Scheduler::Exp3),
            "mixed" => return Ok(Scheduler::Mixed),
            "static" => return Ok(Scheduler::Static(Temperature::Infinite)),
            _ => {}
        }
        if let Some(tau) = s.strip_prefix("tau=").or_else(|| s.strip_prefix("tau:")) {
            return Ok(Scheduler::Static(tau.parse()?));
        }
        let name = s.strip_prefix("static:").unwrap_or(s);
        name.parse::<Preset>()
            .map(|p| Scheduler::Static(p.temperature()))
            .map_err(|_| {
                Error::config(format!(
                    "unknown scheduler `{s}` (expected exp3, mixed, a preset name or tau=<value>)"
                ))
            })
    }
}

impl Serialize for Scheduler {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheduler {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What the scheduler trains or plays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskConfig {
    /// Synthetic faceted regression or classification task.
    Surrogate(SurrogateTaskSpec),
    /// Two facets where only the first carries signal.
    Separable,
    /// Examples loaded from a facet directory tree.
    Directory {
        path: PathBuf,
        #[serde(default = "regression")]
        model: ModelKind,
        #[serde(default = "default_sgd_lr")]
        sgd_lr: f64,
        #[serde(default)]
        init_scale: f64,
    },
    /// Stochastic bandit with known means; reports pseudo-regret.
    Bandit {
        #[serde(flatten)]
        env: StochasticBanditEnv,
        /// Pass payoffs through the quantile rescaler before the update.
        #[serde(default)]
        rescale: bool,
    },
}

fn regression() -> ModelKind {
    ModelKind::Regression
}

fn default_sgd_lr() -> f64 {
    SurrogateTaskSpec::default().sgd_lr
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Surrogate(SurrogateTaskSpec::default())
    }
}

impl TaskConfig {
    pub fn is_bandit(&self) -> bool {
        matches!(self, TaskConfig::Bandit { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            TaskConfig::Surrogate(_) => "surrogate",
            TaskConfig::Separable => "separable",
            TaskConfig::Directory { .. } => "directory",
            TaskConfig::Bandit { .. } => "bandit",
        }
    }

    /// Parses the short CLI form: `surrogate`, `separable`, `dir:<path>` or
    /// `bandit:<mean>,<mean>,...` (Bernoulli arms).
    pub fn parse_short(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "surrogate" => return Ok(TaskConfig::default()),
            "separable" => return Ok(TaskConfig::Separable),
            _ => {}
        }
        if let Some(path) = s.strip_prefix("dir:") {
            return Ok(TaskConfig::Directory {
                path: PathBuf::from(path),
                model: ModelKind::Regression,
                sgd_lr: default_sgd_lr(),
                init_scale: 0.0,
            });
        }
        if let Some(means) = s.strip_prefix("bandit:") {
            let means = means
                .split(',')
                .map(|m| m.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::config(format!("bandit means `{means}`: {e}")))?;
            return Ok(TaskConfig::Bandit {
                env: StochasticBanditEnv::bernoulli(means)?,
                rescale: false,
            });
        }
        Err(Error::config(format!(
            "unknown task `{s}` (expected surrogate, separable, dir:<path> or bandit:<means>)"
        )))
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheduler: Scheduler,
    pub reward: RewardKind,
    /// Training steps (bandit rounds) per replica.
    pub steps: u64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub exploration_rate: f64,
    /// Bandit learning rate.
    pub learning_rate: f64,
    pub weight_cap: f64,
    /// Full dev-set evaluation interval in steps.
    pub eval_every: u64,
    pub replicas: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub task: TaskConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheduler: Scheduler::Exp3,
            reward: "dev-pg".parse().expect("valid reward"),
            steps: 20_000,
            batch_size: 16,
            eval_batch_size: DEFAULT_EVAL_BATCH,
            exploration_rate: 0.25,
            learning_rate: 0.1,
            weight_cap: DEFAULT_WEIGHT_CAP,
            eval_every: 100,
            replicas: 1,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            task: TaskConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas must be at least 1"));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be positive"));
        }
        if self.scheduler.is_bandit() {
            self.exp3_config(1)?;
        }
        match &self.task {
            TaskConfig::Surrogate(spec) => spec.validate()?,
            TaskConfig::Bandit { env, .. } => {
                env.validate()?;
                if !self.scheduler.is_bandit() {
                    return Err(Error::config(
                        "bandit tasks can only be played by the exp3 scheduler",
                    ));
                }
            }
            TaskConfig::Directory { sgd_lr, .. } => {
                if !(sgd_lr.is_finite() && *sgd_lr >= 0.0) {
                    return Err(Error::config(format!("invalid SGD learning rate {sgd_lr}")));
                }
            }
            TaskConfig::Separable => {}
        }
        if let TaskConfig::Bandit {
            env,
            rescale: false,
        } = &self.task
        {
            if let PayoffKind::Gaussian { .. } = env.payoff {
                return Err(Error::config(
                    "Gaussian bandit payoffs need `rescale = true`",
                ));
            }
        }
        Ok(())
    }

    pub fn exp3_config(&self, n_arms: usize) -> Result<Exp3Config> {
        Exp3Config::new(n_arms, self.exploration_rate, self.learning_rate)?
            .with_weight_cap(self.weight_cap)
    }

    /// Static or corpus distribution for non-bandit schedulers.
    pub fn static_distribution(&self, counts: &FacetCounts) -> Result<Option<Distribution>> {
        Ok(match self.scheduler {
            Scheduler::Exp3 => None,
            Scheduler::Static(tau) => Some(temperature_distribution(counts, tau)?),
            Scheduler::Mixed => Some(temperature_distribution(counts, Temperature::Finite(1.0))?),
        })
    }

    /// Loads the directory dataset once so every replica can share it.
    pub fn load_directory(&self) -> Result<Option<FacetedDataset>> {
        match &self.task {
            TaskConfig::Directory { path, .. } => Ok(Some(FacetedDataset::load_dir(path)?)),
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_names() {
        for (text, expect) in [
            ("exp3", Scheduler::Exp3),
            ("mixed", Scheduler::Mixed),
            ("uniform", Scheduler::Static(Temperature::Infinite)),
            (
                "static:upsampled",
                Scheduler::Static(Temperature::Finite(5.0)),
            ),
            (
                "inverse-proportional",
                Scheduler::Static(Temperature::Finite(-1.0)),
            ),
            ("tau=2.5", Scheduler::Static(Temperature::Finite(2.5))),
        ] {
            let parsed: Scheduler = text.parse().unwrap();
            assert_eq!(parsed, expect);
            assert_eq!(parsed.to_string().parse::<Scheduler>().unwrap(), expect);
        }
        assert!("tau=0".parse::<Scheduler>().is_err());
        assert!("greedy".parse::<Scheduler>().unwrap_err().is_config());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            scheduler = "proportional"
            reward = "pgnorm"
            steps = 500
            [task]
            kind = "surrogate"
            sgd_lr = 0.05
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scheduler, Scheduler::Static(Temperature::Finite(1.0)));
        assert_eq!(cfg.reward.to_string(), "pgnorm");
        assert_eq!(cfg.batch_size, 16);
        match &cfg.task {
            TaskConfig::Surrogate(spec) => {
                assert_eq!(spec.sgd_lr, 0.05);
                assert_eq!(spec.facets.len(), 5);
            }
            other => panic!("unexpected task {other:?}"),
        }
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bandit_task_from_toml() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [task]
            kind = "bandit"
            payoff = { kind = "bernoulli" }
            means = [0.7, 0.5, 0.5]
            "#,
        )
        .unwrap();
        assert!(cfg.task.is_bandit());
    }

    #[test]
    fn rejects_invalid_configs() {
        for text in [
            "steps = 0",
            "replicas = 0",
            "exploration_rate = 1.5",
            "learning_rate = 0.0",
            "reward = \"bleu\"",
            "scheduler = \"greedy\"",
            "unknown_field = 3",
            "scheduler = \"mixed\"\n[task]\nkind = \"bandit\"\npayoff = { kind = \"bernoulli\" }\nmeans = [0.5]",
        ] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(err.is_config(), "{text}: {err}");
        }
    }

    #[test]
    fn short_task_forms() {
        assert_eq!(
            TaskConfig::parse_short("separable").unwrap(),
            TaskConfig::Separable
        );
        assert!(TaskConfig::parse_short("bandit:0.7,0.5")
            .unwrap()
            .is_bandit());
        assert!(TaskConfig::parse_short("bandit:0.7,x").is_err());
        assert!(matches!(
            TaskConfig::parse_short("dir:/data").unwrap(),
            TaskConfig::Directory { .. }
        ));
        assert!(TaskConfig::parse_short("imagenet").is_err());
    }
}
