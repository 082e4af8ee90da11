//! EXP3 over facets.
//!
//! The policy mixes a softmax over the weight vector with uniform
//! exploration:
//!
//! ```text
//! pi(a) = (1 - gamma) * exp(w_a) / sum_b exp(w_b) + gamma / n
//! ```
//!
//! After arm `a` is played with probability `pi(a)` and earns the rescaled
//! reward `y`, only its weight moves: `w_a += mu * y / pi(a)`. Rewards are
//! maximized: a positive `y` makes the arm more likely next time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on the largest weight before the vector is shifted down.
pub const DEFAULT_WEIGHT_CAP: f64 = 50.0;

/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp3Config {
    pub n_arms: usize,
    /// Probability mass spread uniformly over all arms (gamma).
    pub exploration_rate: f64,
    /// Step size of the weight update (mu).
    pub learning_rate: f64,
    /// When the largest weight exceeds this value, all weights are shifted so
    /// the largest becomes zero. The policy is unchanged by the shift.
    #[serde(default = "default_weight_cap")]
    pub weight_cap: f64,
}

fn default_weight_cap() -> f64 {
    DEFAULT_WEIGHT_CAP
}

impl Exp3Config {
    pub fn new(n_arms: usize, exploration_rate: f64, learning_rate: f64) -> Result<Self> {
        let config = Self {
            n_arms,
            exploration_rate,
            learning_rate,
            weight_cap: DEFAULT_WEIGHT_CAP,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_weight_cap(mut self, cap: f64) -> Result<Self> {
        self.weight_cap = cap;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arms == 0 {
            return Err(Error::config("EXP3 needs at least one arm"));
        }
        if !(0.0..=1.0).contains(&self.exploration_rate) {
            return Err(Error::config(format!(
                "exploration rate {} outside [0, 1]",
                self.exploration_rate
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "bandit learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_cap.is_finite() && self.weight_cap > 0.0) {
            return Err(Error::config(format!(
                "weight cap must be positive and finite, got {}",
                self.weight_cap
            )));
        }
        Ok(())
    }
}

/// Probability vector over arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates nonnegativity and unit mass (within [`MASS_TOLERANCE`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("empty distribution"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::contract(format!("invalid probability {p}")));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::contract(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("empty distribution"));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, arm: usize) -> f64 {
        self.probs[arm]
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Draws an arm by inverting the cumulative distribution at one uniform
    /// variate. Rounding residue at the top of the CDF goes to the last arm
    /// with nonzero probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (arm, &p) in self.probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return arm;
            }
        }
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Learned state of one EXP3 instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3State {
    weights: Vec<f64>,
    step: u64,
}

impl Exp3State {
    /// All-zero weights at step 0.
    pub fn new(config: &Exp3Config) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            weights: vec![0.0; config.n_arms],
            step: 0,
        })
    }

    /// State with explicit weights, mostly useful in tests and for resuming.
    pub fn from_weights(weights: Vec<f64>, step: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("EXP3 needs at least one arm"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::contract("non-finite weight"));
        }
        Ok(Self { weights, step })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    fn check_arms(&self, config: &Exp3Config) -> Result<()> {
        if self.weights.len() != config.n_arms {
            return Err(Error::contract(format!(
                "state has {} arms but config has {}",
                self.weights.len(),
                config.n_arms
            )));
        }
        Ok(())
    }

    pub fn policy(&self, config: &Exp3Config) -> Result<Distribution> {
        self.check_arms(config)?;
        let gamma = config.exploration_rate;
        let floor = gamma / config.n_arms as f64;
        let probs = softmax(&self.weights)
            .into_iter()
            .map(|s| (1.0 - gamma) * s + floor)
            .collect();
        Ok(Distribution { probs })
    }

    /// Importance-weighted update of the played arm.
    ///
    /// `prob` must be the probability the policy gave `arm` when it was
    /// drawn.
    pub fn update(
        &mut self,
        config: &Exp3Config,
        arm: usize,
        scaled_reward: f64,
        prob: f64,
    ) -> Result<()> {
        self.check_arms(config)?;
        if arm >= self.weights.len() {
            return Err(Error::contract(format!(
                "arm {arm} out of range for {} arms",
                self.weights.len()
            )));
        }
        if !scaled_reward.is_finite() {
            return Err(Error::contract(format!(
                "non-finite reward {scaled_reward}"
            )));
        }
        if !(prob > 0.0 && prob <= 1.0 + MASS_TOLERANCE) {
            return Err(Error::contract(format!(
                "sampling probability {prob} outside (0, 1]"
            )));
        }

        let updated = self.weights[arm] + config.learning_rate * scaled_reward / prob;
        if !updated.is_finite() {
            return Err(Error::contract(format!(
                "weight of arm {arm} overflowed (reward {scaled_reward}, prob {prob})"
            )));
        }
        self.weights[arm] = updated;

        let max = self
            .weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max > config.weight_cap {
            for w in &mut self.weights {
                *w -= max;
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize, gamma: f64, mu: f64) -> Exp3Config {
        Exp3Config::new(n, gamma, mu).unwrap()
    }

    #[test]
    fn init_is_all_zero() {
        let state = Exp3State::new(&cfg(3, 0.1, 0.1)).unwrap();
        assert_eq!(state.weights(), &[0.0, 0.0, 0.0]);
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn single_arm_policy_is_certain() {
        let c = cfg(1, 0.3, 0.1);
        let state = Exp3State::new(&c).unwrap();
        assert_eq!(state.policy(&c).unwrap().probs(), &[1.0]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Exp3Config::new(0, 0.1, 0.1).unwrap_err().is_config());
        assert!(Exp3Config::new(2, -0.1, 0.1).is_err());
        assert!(Exp3Config::new(2, 1.1, 0.1).is_err());
        assert!(Exp3Config::new(2, 0.1, 0.0).is_err());
        assert!(Exp3Config::new(2, 0.1, f64::NAN).is_err());
        assert!(cfg(2, 0.1, 0.1).with_weight_cap(0.0).is_err());
    }

    #[test]
    fn symmetric_policy() {
        let c = cfg(2, 0.25, 0.1);
        let state = Exp3State::new(&c).unwrap();
        assert_eq!(state.policy(&c).unwrap().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn pure_exploration_is_uniform() {
        let c = cfg(4, 1.0, 0.1);
        let state = Exp3State::from_weights(vec![3.0, -1.0, 0.5, 40.0], 0).unwrap();
        assert_eq!(state.policy(&c).unwrap().probs(), &[0.25; 4]);
    }

    #[test]
    fn softmax_of_log_two() {
        // exp(ln 2) = 2 and exp(0) = 1, so the split is 2:1.
        let c = cfg(2, 0.0, 0.1);
        let state = Exp3State::from_weights(vec![2f64.ln(), 0.0], 0).unwrap();
        let p = state.policy(&c).unwrap();
        assert!((p.prob(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.prob(1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn policy_dimension_mismatch() {
        let state = Exp3State::new(&cfg(3, 0.1, 0.1)).unwrap();
        assert!(matches!(
            state.policy(&cfg(2, 0.1, 0.1)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn update_examples() {
        let c = cfg(2, 0.1, 0.1);
        let mut s = Exp3State::new(&c).unwrap();
        s.update(&c, 0, 1.0, 0.5).unwrap();
        assert_eq!(s.weights(), &[0.2, 0.0]);
        assert_eq!(s.step(), 1);

        let c = cfg(2, 0.1, 0.01);
        let mut s = Exp3State::new(&c).unwrap();
        s.update(&c, 1, -1.0, 0.25).unwrap();
        assert_eq!(s.weights(), &[0.0, -0.04]);
    }

    #[test]
    fn zero_reward_only_advances_step() {
        let c = cfg(3, 0.1, 0.5);
        let mut s = Exp3State::from_weights(vec![0.3, -0.2, 1.0], 5).unwrap();
        s.update(&c, 2, 0.0, 0.4).unwrap();
        assert_eq!(s.weights(), &[0.3, -0.2, 1.0]);
        assert_eq!(s.step(), 6);
    }

    #[test]
    fn update_contract_errors() {
        let c = cfg(2, 0.1, 0.1);
        let mut s = Exp3State::new(&c).unwrap();
        assert!(matches!(s.update(&c, 0, 1.0, 0.0), Err(Error::Contract(_))));
        assert!(matches!(
            s.update(&c, 0, 1.0, -0.3),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            s.update(&c, 0, f64::NAN, 0.5),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            s.update(&c, 0, f64::INFINITY, 0.5),
            Err(Error::Contract(_))
        ));
        assert!(matches!(s.update(&c, 2, 1.0, 0.5), Err(Error::Contract(_))));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn cap_shift_keeps_policy() {
        let c = cfg(3, 0.2, 1.0).with_weight_cap(5.0).unwrap();
        let mut s = Exp3State::from_weights(vec![4.5, 1.0, -2.0], 0).unwrap();
        let mut unshifted = s.weights().to_vec();
        unshifted[0] += 1.0 / 0.5;
        s.update(&c, 0, 1.0, 0.5).unwrap();
        assert_eq!(s.weights()[0], 0.0);
        let reference = Exp3State::from_weights(unshifted, 0)
            .unwrap()
            .policy(&c)
            .unwrap();
        let p = s.policy(&c).unwrap();
        for (a, b) in p.probs().iter().zip(reference.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_sampling() {
        let d = Distribution::new(vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 0));
        let d = Distribution::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert!((0..1000).all(|_| d.sample(&mut rng) == 1));
    }

    #[test]
    fn fair_coin_frequency() {
        let d = Distribution::new(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let hits = (0..n).filter(|_| d.sample(&mut rng) == 0).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((hits - n as f64 * 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn exploration_floor_covers_every_arm() {
        let c = cfg(5, 0.05, 0.1);
        let s = Exp3State::from_weights(vec![30.0, 0.0, 0.0, 0.0, 0.0], 0).unwrap();
        let d = s.policy(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 5];
        for _ in 0..100_000 {
            counts[d.sample(&mut rng)] += 1;
        }
        assert!(counts.iter().all(|&k| k > 0), "{counts:?}");
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![]).is_err());
        assert!(Distribution::new(vec![0.6, 0.6]).is_err());
        assert!(Distribution::new(vec![1.2, -0.2]).is_err());
        assert!(Distribution::new(vec![f64::NAN, 1.0]).is_err());
        let json = serde_json::to_string(&Distribution::uniform(2).unwrap()).unwrap();
        assert_eq!(json, "[0.5,0.5]");
        assert!(serde_json::from_str::<Distribution>("[0.9,0.9]").is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
