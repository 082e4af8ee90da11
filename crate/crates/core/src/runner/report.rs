//! Aggregation of finished runs into plot-ready CSV tables.

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{read_summary, replica_log_name, RunSummary};
use crate::env::StepRecord;
use crate::error::{Error, Result};
use crate::stats::{downsample_indices, mean, std_dev};

/// Upper bound on rows of any time-series export.
pub const MAX_SERIES_ROWS: usize = 500;
pub const AGGREGATE_CSV: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub run: String,
    pub scheduler: String,
    pub reward: String,
    pub task: String,
    pub replicas: usize,
    pub completed: usize,
    pub final_dev_loss_mean: Option<f64>,
    pub final_dev_loss_std: Option<f64>,
    pub best_dev_loss_mean: Option<f64>,
    pub best_dev_loss_std: Option<f64>,
    pub regret_mean: Option<f64>,
    pub regret_std: Option<f64>,
    pub play_fractions: Vec<f64>,
}

/// One downsampled time point, averaged over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub step: u64,
    pub probs: Vec<f64>,
    /// Cumulative fraction of steps each arm was played up to `step`.
    pub play_fractions: Vec<f64>,
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub row: AggregateRow,
    pub series: Vec<SeriesRow>,
    /// `(step, mean, std)` of the full dev loss.
    pub dev_curve: Vec<(u64, f64, f64)>,
}

fn summarize(values: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        (None, None)
    } else {
        (Some(mean(&values)), Some(std_dev(&values)))
    }
}

fn label_of(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn aggregate_row(label: String, summary: &RunSummary) -> AggregateRow {
    let done: Vec<_> = summary
        .replicas
        .iter()
        .filter(|r| r.is_completed())
        .collect();
    let (final_mean, final_std) = summarize(done.iter().filter_map(|r| r.final_dev_loss).collect());
    let (best_mean, best_std) = summarize(done.iter().filter_map(|r| r.best_dev_loss).collect());
    let (regret_mean, regret_std) = summarize(done.iter().filter_map(|r| r.regret).collect());
    let play_fractions = (0..summary.n_arms)
        .map(|a| {
            let v: Vec<f64> = done
                .iter()
                .filter_map(|r| r.play_fractions.get(a).copied())
                .collect();
            if v.is_empty() {
                0.0
            } else {
                mean(&v)
            }
        })
        .collect();
    AggregateRow {
        run: label,
        scheduler: summary.scheduler.clone(),
        reward: summary.reward.clone(),
        task: summary.task.clone(),
        replicas: summary.replicas.len(),
        completed: done.len(),
        final_dev_loss_mean: final_mean,
        final_dev_loss_std: final_std,
        best_dev_loss_mean: best_mean,
        best_dev_loss_std: best_std,
        regret_mean,
        regret_std,
        play_fractions,
    }
}

/// Per-replica series at the selected step indices.
fn replica_series(path: &Path, keep: &[usize], n_arms: usize) -> Result<Vec<SeriesRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut counts = vec![0u64; n_arms];
    let mut played = 0u64;
    let mut out = Vec::with_capacity(keep.len());
    let mut next = 0;
    for (i, line) in reader.lines().enumerate() {
        if next == keep.len() {
            break;
        }
        let record: StepRecord = serde_json::from_str(&line?)?;
        if let Some(a) = record.arm {
            counts[a] += 1;
            played += 1;
        }
        if i == keep[next] {
            let play_fractions = if played > 0 {
                counts.iter().map(|&c| c as f64 / played as f64).collect()
            } else {
                record.probs.clone()
            };
            out.push(SeriesRow {
                step: record.step,
                probs: record.probs,
                play_fractions,
                regret: record.regret,
            });
            next += 1;
        }
    }
    if out.len() != keep.len() {
        return Err(Error::Aggregation(format!(
            "{} ended before step {}",
            path.display(),
            keep[out.len()]
        )));
    }
    Ok(out)
}

fn average_series(per_replica: &[Vec<SeriesRow>]) -> Vec<SeriesRow> {
    let Some(first) = per_replica.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let rows: Vec<&SeriesRow> = per_replica.iter().map(|s| &s[i]).collect();
            let width = rows[0].probs.len();
            let avg = |f: &dyn Fn(&SeriesRow) -> &Vec<f64>| -> Vec<f64> {
                (0..width)
                    .map(|a| rows.iter().map(|r| f(r)[a]).sum::<f64>() / rows.len() as f64)
                    .collect()
            };
            let regrets: Vec<f64> = rows.iter().filter_map(|r| r.regret).collect();
            SeriesRow {
                step: rows[0].step,
                probs: avg(&|r| &r.probs),
                play_fractions: avg(&|r| &r.play_fractions),
                regret: (!regrets.is_empty()).then(|| mean(&regrets)),
            }
        })
        .collect()
}

fn dev_curve(summary: &RunSummary) -> Vec<(u64, f64, f64)> {
    let done: Vec<_> = summary
        .replicas
        .iter()
        .filter(|r| r.is_completed())
        .collect();
    let Some(first) = done.first() else {
        return Vec::new();
    };
    let len = done.iter().map(|r| r.dev_curve.len()).min().unwrap_or(0);
    downsample_indices(len, MAX_SERIES_ROWS)
        .into_iter()
        .map(|i| {
            let losses: Vec<f64> = done.iter().map(|r| r.dev_curve[i].loss).collect();
            (first.dev_curve[i].step, mean(&losses), std_dev(&losses))
        })
        .collect()
}

/// Aggregates one run directory.
pub fn report_run(dir: &Path) -> Result<RunReport> {
    let summary = read_summary(dir)?;
    let label = label_of(dir);
    let done: Vec<_> = summary
        .replicas
        .iter()
        .filter(|r| r.is_completed())
        .collect();
    let steps = done.iter().map(|r| r.steps_completed).min().unwrap_or(0) as usize;
    let keep = downsample_indices(steps, MAX_SERIES_ROWS);
    let mut per_replica = Vec::with_capacity(done.len());
    for r in &done {
        let path = dir.join(replica_log_name(r.replica));
        if path.exists() {
            per_replica.push(replica_series(&path, &keep, summary.n_arms)?);
        }
    }
    Ok(RunReport {
        row: aggregate_row(label, &summary),
        series: average_series(&per_replica),
        dev_curve: dev_curve(&summary),
    })
}

fn check_compatible(runs: &[(PathBuf, RunSummary)]) -> Result<()> {
    let (first_dir, first) = &runs[0];
    let first_bandit = first.task == "bandit";
    for (dir, s) in &runs[1..] {
        if s.n_arms != first.n_arms || s.facet_names != first.facet_names {
            return Err(Error::Aggregation(format!(
                "{} has facets {:?} but {} has {:?}",
                dir.display(),
                s.facet_names,
                first_dir.display(),
                first.facet_names
            )));
        }
        if (s.task == "bandit") != first_bandit {
            return Err(Error::Aggregation(format!(
                "cannot merge bandit-testbed and training runs ({} vs {})",
                dir.display(),
                first_dir.display()
            )));
        }
    }
    Ok(())
}

/// Aggregates several run directories into `out_dir`:
///
/// - `aggregate.csv`: one row per run with mean and std of final/best dev
///   loss and regret, and mean play fractions.
/// - `series_<run>.csv`: at most 500 time points of mean policy
///   probabilities, cumulative play fractions and regret.
/// - `dev_<run>.csv`: at most 500 points of mean and std dev loss.
pub fn report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<RunReport>> {
    if run_dirs.is_empty() {
        return Err(Error::Aggregation("no run directories given".into()));
    }
    let summaries = run_dirs
        .iter()
        .map(|d| Ok((d.clone(), read_summary(d)?)))
        .collect::<Result<Vec<_>>>()?;
    check_compatible(&summaries)?;
    let facet_names = summaries[0].1.facet_names.clone();

    let reports = run_dirs
        .iter()
        .map(|d| report_run(d))
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(out_dir)?;
    write_aggregate(&out_dir.join(AGGREGATE_CSV), &reports, &facet_names)?;
    for r in &reports {
        write_series(
            &out_dir.join(format!("series_{}.csv", r.row.run)),
            r,
            &facet_names,
        )?;
        write_dev(&out_dir.join(format!("dev_{}.csv", r.row.run)), r)?;
    }
    Ok(reports)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_aggregate(path: &Path, reports: &[RunReport], names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "run",
        "scheduler",
        "reward",
        "task",
        "replicas",
        "completed",
        "final_dev_loss_mean",
        "final_dev_loss_std",
        "best_dev_loss_mean",
        "best_dev_loss_std",
        "regret_mean",
        "regret_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().map(|n| format!("fraction_{n}")));
    w.write_record(&header)?;
    for r in reports {
        let a = &r.row;
        let mut row = vec![
            a.run.clone(),
            a.scheduler.clone(),
            a.reward.clone(),
            a.task.clone(),
            a.replicas.to_string(),
            a.completed.to_string(),
            opt(a.final_dev_loss_mean),
            opt(a.final_dev_loss_std),
            opt(a.best_dev_loss_mean),
            opt(a.best_dev_loss_std),
            opt(a.regret_mean),
            opt(a.regret_std),
        ];
        row.extend(a.play_fractions.iter().map(|f| f.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_series(path: &Path, report: &RunReport, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string()];
    header.extend(names.iter().map(|n| format!("prob_{n}")));
    header.extend(names.iter().map(|n| format!("played_{n}")));
    header.push("regret".into());
    w.write_record(&header)?;
    for s in &report.series {
        let mut row = vec![s.step.to_string()];
        row.extend(s.probs.iter().map(|p| p.to_string()));
        row.extend(s.play_fractions.iter().map(|p| p.to_string()));
        row.push(opt(s.regret));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_dev(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "dev_loss_mean", "dev_loss_std"])?;
    for (step, m, s) in &report.dev_curve {
        w.write_record([step.to_string(), m.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
