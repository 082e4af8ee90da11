//! Multi-armed-bandit curriculum scheduling for training on multi-facet data.
//!
//! An EXP3 bandit chooses, at every training step, which facet (domain,
//! language pair, data class, ...) the learner is updated on. The learner
//! reports a learning-progress signal back, which is rescaled into `[-1, 1]`
//! with sliding-window quantiles and fed to the exponential-weights update.
//!
//! The crate is organized as:
//!
//! - [`bandit`]: EXP3 policy, arm sampling and weight update.
//! - [`rewards`]: raw progress rewards and the quantile rescaler.
//! - [`samplers`]: static temperature-based facet distributions.
//! - [`env`]: the stochastic bandit testbed, surrogate learners and the
//!   per-step curriculum loop.
//! - [`runner`]: experiment configs, replicas, logs, sweeps and reports.

pub mod bandit;
pub mod env;
pub mod error;
pub mod rewards;
pub mod rng;
pub mod runner;
pub mod samplers;
pub mod stats;

pub use bandit::{Distribution, Exp3Config, Exp3State};
pub use env::dataset::{Example, FacetedDataset};
pub use env::learner::{Learner, StepLosses};
pub use env::{StepRecord, StochasticBanditEnv};
pub use error::{Error, Result};
pub use rewards::{EvalSource, ProgressMeasure, RewardKind, RewardWindow};
pub use samplers::{FacetCounts, Temperature};
