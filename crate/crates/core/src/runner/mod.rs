//! Experiment orchestration: configs, replicas, logs, sweeps and reports.
//!
//! A run directory holds the resolved `config.toml`, one
//! `replica_NNN.jsonl` log per replica (one [`StepRecord`] per line),
//! `summary.json` and `summary.csv`.
//!
//! [`StepRecord`]: crate::env::StepRecord

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, Scheduler, TaskConfig};
pub use report::{report, report_run, AggregateRow, RunReport};
pub use run::{run, run_in_memory, run_replica, ReplicaStatus, ReplicaSummary, RunSummary};
pub use sweep::{sweep, SweepGrid, SweepRow};
