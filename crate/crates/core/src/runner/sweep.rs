use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, DEFAULT_SWEEP_HORIZON};
use super::run::{run, run_in_memory, RunSummary};
use crate::error::{Error, Result};
use crate::stats::{mean, std_dev};

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub learning_rates: Vec<f64>,
    pub exploration_rates: Vec<f64>,
    /// Cells run at most this many steps.
    pub horizon: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            learning_rates: super::config::DEFAULT_LR_GRID.to_vec(),
            exploration_rates: super::config::DEFAULT_EXPLORATION_GRID.to_vec(),
            horizon: DEFAULT_SWEEP_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rank: usize,
    pub learning_rate: f64,
    pub exploration_rate: f64,
    /// Mean best dev loss, or mean final regret on bandit tasks. Lower is
    /// better.
    pub metric: Option<f64>,
    pub metric_std: Option<f64>,
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

/// Metric a sweep ranks by: mean best dev loss of completed replicas, or mean
/// final regret for bandit tasks. `None` when nothing completed.
pub fn ranking_metric(summary: &RunSummary) -> Option<(f64, f64)> {
    let values: Vec<f64> = summary
        .replicas
        .iter()
        .filter(|r| r.is_completed())
        .filter_map(|r| r.regret.or(r.best_dev_loss))
        .collect();
    if values.is_empty() || summary.aborted() {
        return None;
    }
    Some((mean(&values), std_dev(&values)))
}

fn cell_dir(root: &Path, lr: f64, gamma: f64) -> std::path::PathBuf {
    root.join(format!("lr{lr}_gamma{gamma}"))
}

/// Runs every `(learning_rate, exploration_rate)` cell of the grid and ranks
/// cells by ascending metric. Ties keep grid order; failed cells go last.
///
/// With `write_logs`, each cell writes a full run into its own subdirectory
/// of `base.output_dir` and the ranking goes to `sweep.csv` there.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid, write_logs: bool) -> Result<Vec<SweepRow>> {
    if grid.learning_rates.is_empty() || grid.exploration_rates.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    if grid.horizon == 0 {
        return Err(Error::config("sweep horizon must be positive"));
    }
    base.validate()?;

    let mut rows = Vec::new();
    for &lr in &grid.learning_rates {
        for &gamma in &grid.exploration_rates {
            let mut cfg = base.clone();
            cfg.learning_rate = lr;
            cfg.exploration_rate = gamma;
            cfg.steps = cfg.steps.min(grid.horizon);
            cfg.output_dir = cell_dir(&base.output_dir, lr, gamma);
            let outcome = cfg.validate().and_then(|_| {
                if write_logs {
                    run(&cfg)
                } else {
                    run_in_memory(&cfg)
                }
            });
            let (metric, status) = match outcome {
                Ok(summary) => match ranking_metric(&summary) {
                    Some(m) => (Some(m), "ok".to_string()),
                    None => (None, "failed: replica aborted".to_string()),
                },
                Err(e) => (None, format!("failed: {e}")),
            };
            rows.push(SweepRow {
                rank: 0,
                learning_rate: lr,
                exploration_rate: gamma,
                metric: metric.map(|m| m.0),
                metric_std: metric.map(|m| m.1),
                status,
            });
        }
    }

    rank_rows(&mut rows);
    if write_logs {
        std::fs::create_dir_all(&base.output_dir)?;
        write_sweep_csv(&base.output_dir.join(SWEEP_CSV), &rows)?;
    }
    Ok(rows)
}

/// Stable ascending sort by metric with failures last; assigns 1-based ranks.
pub fn rank_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| match (a.metric, b.metric) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "rank",
        "learning_rate",
        "exploration_rate",
        "metric",
        "metric_std",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.learning_rate.to_string(),
            r.exploration_rate.to_string(),
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
            r.metric_std.map(|m| m.to_string()).unwrap_or_default(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: Option<f64>, lr: f64) -> SweepRow {
        SweepRow {
            rank: 0,
            learning_rate: lr,
            exploration_rate: 0.1,
            metric,
            metric_std: None,
            status: if metric.is_some() {
                "ok".into()
            } else {
                "failed: x".into()
            },
        }
    }

    #[test]
    fn ranking_is_stable_with_failures_last() {
        let mut rows = vec![
            row(None, 1.0),
            row(Some(0.5), 2.0),
            row(Some(0.2), 3.0),
            row(Some(0.5), 4.0),
        ];
        rank_rows(&mut rows);
        let order: Vec<f64> = rows.iter().map(|r| r.learning_rate).collect();
        assert_eq!(order, vec![3.0, 2.0, 4.0, 1.0]);
        assert_eq!(
            rows.iter().map(|r| r.rank).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
        assert!(rows[3].failed());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let grid = SweepGrid {
            learning_rates: vec![],
            ..SweepGrid::default()
        };
        assert!(sweep(&ExperimentConfig::default(), &grid, false)
            .unwrap_err()
            .is_config());
    }
}
