//! Learning-progress rewards and their rescaling.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of recent raw rewards kept for quantile estimation.
pub const WINDOW_CAPACITY: usize = 5000;
pub const LO_QUANTILE: f64 = 0.20;
pub const HI_QUANTILE: f64 = 0.80;
/// Quantile spreads below this are treated as degenerate.
pub const MIN_SPREAD: f64 = 1e-12;
/// Dev batch size used for `dev-*` rewards unless configured otherwise.
pub const DEFAULT_EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProgressMeasure {
    /// Loss before the update.
    Loss,
    /// Absolute prediction gain, `L_before - L_after`.
    Pg,
    /// Relative prediction gain, `1 - L_after / L_before`.
    PgNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalSource {
    TrainBatch,
    DevBatch,
}

/// One of the six reward definitions: `loss`, `pg`, `pgnorm` and their
/// `dev-` counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RewardKind {
    pub measure: ProgressMeasure,
    pub source: EvalSource,
}

impl RewardKind {
    pub const ALL: [RewardKind; 6] = [
        RewardKind::train(ProgressMeasure::Loss),
        RewardKind::train(ProgressMeasure::Pg),
        RewardKind::train(ProgressMeasure::PgNorm),
        RewardKind::dev(ProgressMeasure::Loss),
        RewardKind::dev(ProgressMeasure::Pg),
        RewardKind::dev(ProgressMeasure::PgNorm),
    ];

    pub const fn train(measure: ProgressMeasure) -> Self {
        Self {
            measure,
            source: EvalSource::TrainBatch,
        }
    }

    pub const fn dev(measure: ProgressMeasure) -> Self {
        Self {
            measure,
            source: EvalSource::DevBatch,
        }
    }

    pub fn uses_dev(&self) -> bool {
        self.source == EvalSource::DevBatch
    }

    /// Raw progress reward from the losses around one update.
    pub fn raw_reward(&self, loss_before: f64, loss_after: f64) -> Result<f64> {
        if !loss_before.is_finite() || !loss_after.is_finite() {
            return Err(Error::contract(format!(
                "non-finite losses ({loss_before}, {loss_after})"
            )));
        }
        match self.measure {
            ProgressMeasure::Loss => Ok(loss_before),
            ProgressMeasure::Pg => Ok(loss_before - loss_after),
            ProgressMeasure::PgNorm => {
                if loss_before == 0.0 {
                    return Err(Error::Arithmetic(
                        "relative prediction gain undefined for zero loss".into(),
                    ));
                }
                Ok(1.0 - loss_after / loss_before)
            }
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = if self.uses_dev() { "dev-" } else { "" };
        let name = match self.measure {
            ProgressMeasure::Loss => "loss",
            ProgressMeasure::Pg => "pg",
            ProgressMeasure::PgNorm => "pgnorm",
        };
        write!(f, "{prefix}{name}")
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (source, rest) = match lower.strip_prefix("dev-") {
            Some(rest) => (EvalSource::DevBatch, rest),
            None => (EvalSource::TrainBatch, lower.as_str()),
        };
        let measure = match rest {
            "loss" => ProgressMeasure::Loss,
            "pg" => ProgressMeasure::Pg,
            "pgnorm" => ProgressMeasure::PgNorm,
            _ => return Err(Error::config(format!(
                "unknown reward `{s}` (expected loss, pg, pgnorm, dev-loss, dev-pg or dev-pgnorm)"
            ))),
        };
        Ok(Self { measure, source })
    }
}

impl Serialize for RewardKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RewardKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Linear-interpolation quantile of ascending `sorted` values.
///
/// Uses the position `h = (len - 1) * q` and interpolates between the
/// neighbouring order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Maps `raw` to `[-1, 1]` so that `lo` goes to -1 and `hi` to +1, clipping
/// outside. Degenerate spreads map to 0.
pub fn rescale(raw: f64, lo: f64, hi: f64) -> f64 {
    let spread = hi - lo;
    if spread < MIN_SPREAD {
        return 0.0;
    }
    ((raw - lo) / spread).clamp(0.0, 1.0) * 2.0 - 1.0
}

/// Sliding window over the most recent raw rewards.
///
/// The insertion-ordered ring drives eviction; a sorted mirror answers
/// quantile queries without re-sorting.
#[derive(Debug, Clone)]
pub struct RewardWindow {
    ring: VecDeque<f64>,
    sorted: Vec<f64>,
    capacity: usize,
    lo_quantile: f64,
    hi_quantile: f64,
}

impl Default for RewardWindow {
    fn default() -> Self {
        Self::new()
    }
}

impl RewardWindow {
    pub fn new() -> Self {
        Self::with_capacity(WINDOW_CAPACITY)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "reward window needs a positive capacity");
        Self {
            ring: VecDeque::with_capacity(capacity),
            sorted: Vec::with_capacity(capacity),
            capacity,
            lo_quantile: LO_QUANTILE,
            hi_quantile: HI_QUANTILE,
        }
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Window contents, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.ring.iter().copied()
    }

    /// Current `(lo, hi)` quantiles, or `None` while empty.
    pub fn quantiles(&self) -> Option<(f64, f64)> {
        if self.sorted.is_empty() {
            return None;
        }
        Some((
            quantile_sorted(&self.sorted, self.lo_quantile),
            quantile_sorted(&self.sorted, self.hi_quantile),
        ))
    }

    fn push(&mut self, raw: f64) {
        if self.ring.len() == self.capacity {
            let old = self.ring.pop_front().expect("full window");
            // total_cmp finds the exact bit pattern, including signed zeros.
            let pos = self
                .sorted
                .binary_search_by(|v| v.total_cmp(&old))
                .expect("evicted value missing from sorted mirror");
            self.sorted.remove(pos);
        }
        self.ring.push_back(raw);
        let pos = self.sorted.partition_point(|v| v.total_cmp(&raw).is_lt());
        self.sorted.insert(pos, raw);
    }

    /// Appends `raw`, then rescales it against the window's quantiles.
    pub fn push_and_rescale(&mut self, raw: f64) -> Result<f64> {
        if !raw.is_finite() {
            return Err(Error::contract(format!("non-finite raw reward {raw}")));
        }
        self.push(raw);
        let (lo, hi) = self.quantiles().expect("window is non-empty after push");
        Ok(rescale(raw, lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_reward_examples() {
        let pg = RewardKind::train(ProgressMeasure::Pg);
        let pgnorm = RewardKind::train(ProgressMeasure::PgNorm);
        let loss = RewardKind::train(ProgressMeasure::Loss);
        assert_eq!(pg.raw_reward(2.0, 1.5).unwrap(), 0.5);
        assert_eq!(pgnorm.raw_reward(2.0, 1.0).unwrap(), 0.5);
        assert_eq!(loss.raw_reward(3.2, 0.1).unwrap(), 3.2);
    }

    #[test]
    fn raw_reward_errors() {
        let pgnorm = RewardKind::dev(ProgressMeasure::PgNorm);
        assert!(matches!(
            pgnorm.raw_reward(0.0, 1.0),
            Err(Error::Arithmetic(_))
        ));
        let pg = RewardKind::train(ProgressMeasure::Pg);
        assert!(matches!(
            pg.raw_reward(f64::NAN, 1.0),
            Err(Error::Contract(_))
        ));
        assert!(pg.raw_reward(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn names_round_trip() {
        let names = ["loss", "pg", "pgnorm", "dev-loss", "dev-pg", "dev-pgnorm"];
        for (kind, name) in RewardKind::ALL.iter().zip(names) {
            assert_eq!(kind.to_string(), name);
            assert_eq!(name.parse::<RewardKind>().unwrap(), *kind);
        }
        assert!("dev-bleu".parse::<RewardKind>().unwrap_err().is_config());
    }

    #[test]
    fn midpoint_of_hundred() {
        let mut w = RewardWindow::new();
        for v in (0..=100).filter(|&v| v != 50) {
            w.push(v as f64);
        }
        assert_eq!(w.push_and_rescale(50.0).unwrap(), 0.0);
        assert_eq!(w.quantiles(), Some((20.0, 80.0)));
    }

    #[test]
    fn clips_at_the_top() {
        let mut w = RewardWindow::new();
        for v in 0..10 {
            w.push(v as f64);
        }
        assert_eq!(w.push_and_rescale(1e6).unwrap(), 1.0);
        assert_eq!(w.push_and_rescale(-1e6).unwrap(), -1.0);
    }

    #[test]
    fn first_reward_is_neutral() {
        let mut w = RewardWindow::new();
        assert_eq!(w.push_and_rescale(3.7).unwrap(), 0.0);
        assert!(w.push_and_rescale(f64::NAN).is_err());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn small_capacity_evicts_oldest() {
        let mut w = RewardWindow::with_capacity(3);
        for v in [5.0, 1.0, 2.0, 3.0] {
            w.push(v);
        }
        assert_eq!(w.iter().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(w.sorted, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn signed_zeros_evict_cleanly() {
        let mut w = RewardWindow::with_capacity(2);
        for v in [0.0, -0.0, 0.0, -0.0, 1.0, 1.0] {
            w.push(v);
        }
        assert_eq!(w.sorted, vec![1.0, 1.0]);
    }
}
