//! Stochastic multi-armed bandit testbed with known arm means.

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use super::StepRecord;
use crate::bandit::{Exp3Config, Exp3State};
use crate::error::{Error, Result};
use crate::rewards::RewardWindow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PayoffKind {
    /// Reward 1 with probability equal to the arm mean, else 0.
    Bernoulli,
    /// Normal rewards around the arm mean.
    Gaussian { sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticBanditEnv {
    pub payoff: PayoffKind,
    pub means: Vec<f64>,
}

impl StochasticBanditEnv {
    pub fn bernoulli(means: Vec<f64>) -> Result<Self> {
        let env = Self {
            payoff: PayoffKind::Bernoulli,
            means,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn gaussian(means: Vec<f64>, sd: f64) -> Result<Self> {
        let env = Self {
            payoff: PayoffKind::Gaussian { sd },
            means,
        };
        env.validate()?;
        Ok(env)
    }

    /// One best arm at `best`, all others at `rest`.
    pub fn one_best_bernoulli(n: usize, best: f64, rest: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("bandit needs at least one arm"));
        }
        let mut means = vec![rest; n];
        means[0] = best;
        Self::bernoulli(means)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::config("bandit needs at least one arm"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("arm means must be finite"));
        }
        match self.payoff {
            PayoffKind::Bernoulli => {
                if self.means.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return Err(Error::config("Bernoulli means must lie in [0, 1]"));
                }
            }
            PayoffKind::Gaussian { sd } => {
                if !(sd.is_finite() && sd >= 0.0) {
                    return Err(Error::config(format!("invalid payoff sd {sd}")));
                }
            }
        }
        Ok(())
    }

    pub fn n_arms(&self) -> usize {
        self.means.len()
    }

    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn best_arm(&self) -> usize {
        crate::bandit::argmax(&self.means)
    }

    pub fn pull<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        let mean = self.means[arm];
        match self.payoff {
            PayoffKind::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::Gaussian { sd } => Normal::new(mean, sd).expect("validated sd").sample(rng),
        }
    }

    /// Expected shortfall of `played_arms` against always playing the best
    /// arm: `T * max_a mean_a - sum_t mean_{a_t}`.
    pub fn pseudo_regret(&self, played_arms: &[usize]) -> f64 {
        let best = self.best_mean();
        played_arms.iter().map(|&a| best - self.means[a]).sum()
    }

    /// Cumulative pseudo-regret after each step.
    pub fn regret_curve(&self, played_arms: &[usize]) -> Vec<f64> {
        let best = self.best_mean();
        played_arms
            .iter()
            .scan(0.0, |acc, &a| {
                *acc += best - self.means[a];
                Some(*acc)
            })
            .collect()
    }
}

/// EXP3 playing a [`StochasticBanditEnv`].
///
/// Payoffs are fed to the update directly unless a rescaling window is
/// attached, in which case they go through the quantile rescaler first.
#[derive(Debug, Clone)]
pub struct BanditTestbed {
    pub env: StochasticBanditEnv,
    pub config: Exp3Config,
    pub state: Exp3State,
    pub window: Option<RewardWindow>,
    regret: f64,
}

impl BanditTestbed {
    pub fn new(env: StochasticBanditEnv, config: Exp3Config, rescale: bool) -> Result<Self> {
        env.validate()?;
        if env.n_arms() != config.n_arms {
            return Err(Error::config(format!(
                "environment has {} arms, bandit {}",
                env.n_arms(),
                config.n_arms
            )));
        }
        if !rescale {
            if let PayoffKind::Gaussian { .. } = env.payoff {
                return Err(Error::config(
                    "unbounded Gaussian payoffs need reward rescaling",
                ));
            }
        }
        Ok(Self {
            state: Exp3State::new(&config)?,
            env,
            config,
            window: rescale.then(RewardWindow::new),
            regret: 0.0,
        })
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.regret
    }

    /// Plays one round and returns the chosen arm.
    pub fn step<R: Rng + ?Sized, P: Rng + ?Sized>(
        &mut self,
        scheduler_rng: &mut R,
        payoff_rng: &mut P,
    ) -> Result<usize> {
        self.step_record(scheduler_rng, payoff_rng)
            .map(|r| r.arm.unwrap_or(0))
    }

    pub fn step_record<R: Rng + ?Sized, P: Rng + ?Sized>(
        &mut self,
        scheduler_rng: &mut R,
        payoff_rng: &mut P,
    ) -> Result<StepRecord> {
        let dist = self.state.policy(&self.config)?;
        let arm = dist.sample(scheduler_rng);
        let prob = dist.prob(arm);
        let raw = self.env.pull(arm, payoff_rng);
        let scaled = match &mut self.window {
            Some(w) => w.push_and_rescale(raw)?,
            None => raw,
        };
        let step = self.state.step();
        self.state.update(&self.config, arm, scaled, prob)?;
        self.regret += self.env.best_mean() - self.env.means[arm];
        Ok(StepRecord {
            step,
            arm: Some(arm),
            probs: dist.into(),
            raw_reward: Some(raw),
            scaled_reward: Some(scaled),
            regret: Some(self.regret),
            ..StepRecord::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regret_examples() {
        let env = StochasticBanditEnv::bernoulli(vec![0.7, 0.5]).unwrap();
        assert_eq!(env.pseudo_regret(&[0; 50]), 0.0);
        let r = env.pseudo_regret(&[1; 100]);
        assert!((r - 20.0).abs() < 1e-9, "{r}");
        let curve = env.regret_curve(&[1, 0, 1]);
        assert_eq!(curve.len(), 3);
        assert!((curve[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_envs() {
        assert!(StochasticBanditEnv::bernoulli(vec![]).is_err());
        assert!(StochasticBanditEnv::bernoulli(vec![1.2]).is_err());
        assert!(StochasticBanditEnv::gaussian(vec![0.0], -1.0).is_err());
        assert!(StochasticBanditEnv::gaussian(vec![f64::NAN], 1.0).is_err());
        let env = StochasticBanditEnv::gaussian(vec![0.0, 1.0], 1.0).unwrap();
        let cfg = Exp3Config::new(2, 0.1, 0.01).unwrap();
        assert!(BanditTestbed::new(env.clone(), cfg, false).is_err());
        assert!(BanditTestbed::new(env, cfg, true).is_ok());
        let env3 = StochasticBanditEnv::bernoulli(vec![0.1; 3]).unwrap();
        assert!(BanditTestbed::new(env3, cfg, false).is_err());
    }

    #[test]
    fn bernoulli_pull_frequency() {
        let env = StochasticBanditEnv::bernoulli(vec![0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50_000;
        let ones: f64 = (0..n).map(|_| env.pull(0, &mut rng)).sum();
        let sigma = (n as f64 * 0.3 * 0.7).sqrt();
        assert!((ones - 0.3 * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn testbed_tracks_regret() {
        let env = StochasticBanditEnv::bernoulli(vec![0.9, 0.1]).unwrap();
        let cfg = Exp3Config::new(2, 0.1, 0.05).unwrap();
        let mut bed = BanditTestbed::new(env.clone(), cfg, false).unwrap();
        let mut s = ChaCha8Rng::seed_from_u64(0);
        let mut p = ChaCha8Rng::seed_from_u64(1);
        let arms: Vec<usize> = (0..2000)
            .map(|_| bed.step(&mut s, &mut p).unwrap())
            .collect();
        assert!((bed.cumulative_regret() - env.pseudo_regret(&arms)).abs() < 1e-9);
        let late_best = arms[1800..].iter().filter(|&&a| a == 0).count();
        assert!(late_best > 150, "{late_best}");
    }
}
