//! Static facet distributions from temperature-annealed corpus proportions.
//!
//! With empirical facet proportions `p(f) = |D_f| / |D|`, the sampling
//! distribution at temperature `tau` is `softmax(ln p(f) / tau)`, i.e.
//! proportional to `p(f)^(1/tau)`. `tau = 1` reproduces the proportions,
//! larger temperatures flatten toward uniform, `tau = inf` is exactly
//! uniform and `tau = -1` inverts the proportions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{softmax, Distribution};
use crate::error::{Error, Result};

/// Per-facet example counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetCounts(Vec<u64>);

impl FacetCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::config("no facets"));
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::config(format!("facet {i} is empty")));
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn proportions(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.0.iter().map(|&c| c as f64 / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Finite(f64),
    Infinite,
}

impl Temperature {
    pub fn finite(tau: f64) -> Result<Self> {
        if tau == 0.0 || !tau.is_finite() {
            return Err(Error::config(format!(
                "temperature must be nonzero and finite (use Infinite for uniform), got {tau}"
            )));
        }
        Ok(Temperature::Finite(tau))
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Finite(t) => write!(f, "{t}"),
            Temperature::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Temperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "∞" => Ok(Temperature::Infinite),
            other => {
                let tau: f64 = other
                    .parse()
                    .map_err(|_| Error::config(format!("invalid temperature `{s}`")))?;
                if tau.is_infinite() && tau > 0.0 {
                    return Ok(Temperature::Infinite);
                }
                Temperature::finite(tau)
            }
        }
    }
}

/// Named temperature presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `tau = inf`
    Uniform,
    /// `tau = 1`
    Proportional,
    /// `tau = 5`
    Upsampled,
    /// `tau = -1`
    InverseProportional,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Uniform,
        Preset::Proportional,
        Preset::Upsampled,
        Preset::InverseProportional,
    ];

    pub fn temperature(self) -> Temperature {
        match self {
            Preset::Uniform => Temperature::Infinite,
            Preset::Proportional => Temperature::Finite(1.0),
            Preset::Upsampled => Temperature::Finite(5.0),
            Preset::InverseProportional => Temperature::Finite(-1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Uniform => "uniform",
            Preset::Proportional => "proportional",
            Preset::Upsampled => "upsampled",
            Preset::InverseProportional => "inverse-proportional",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown preset `{s}` (expected uniform, proportional, upsampled or inverse-proportional)"
                ))
            })
    }
}

pub fn temperature_distribution(counts: &FacetCounts, tau: Temperature) -> Result<Distribution> {
    let n = counts.len();
    match tau {
        Temperature::Infinite => Distribution::uniform(n),
        Temperature::Finite(t) => {
            if t == 0.0 || !t.is_finite() {
                return Err(Error::config(format!("invalid temperature {t}")));
            }
            let logits: Vec<f64> = counts.proportions().iter().map(|p| p.ln() / t).collect();
            Distribution::new(softmax(&logits))
        }
    }
}

/// Endless i.i.d. arm stream drawn from a fixed distribution.
pub struct StaticSchedule<'a, R: Rng + ?Sized> {
    dist: &'a Distribution,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> StaticSchedule<'a, R> {
    pub fn new(dist: &'a Distribution, rng: &'a mut R) -> Self {
        Self { dist, rng }
    }
}

impl<R: Rng + ?Sized> Iterator for StaticSchedule<'_, R> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(self.dist.sample(self.rng))
    }
}
