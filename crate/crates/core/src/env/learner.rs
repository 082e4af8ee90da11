//! Trainable models driven by the curriculum.

use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::dataset::Example;
use crate::bandit::softmax;
use crate::error::{Error, Result};

/// Losses on the training batch immediately before and after one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub loss_before: f64,
    pub loss_after: f64,
}

/// A model the scheduler trains one batch at a time.
pub trait Learner: Send {
    /// One parameter update on `batch`.
    fn train_step(&mut self, batch: &[&Example]) -> StepLosses;

    /// Mean loss on `batch`. Must not change the parameters.
    fn eval(&self, batch: &[&Example]) -> f64;

    fn params(&self) -> &[f64];

    /// Hash of the exact parameter bits.
    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in self.params() {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Differentiable per-batch objective over a flat parameter vector.
pub trait Objective: Send + Sync {
    fn n_params(&self) -> usize;

    fn loss(&self, params: &[f64], batch: &[&Example]) -> f64;

    /// Loss and gradient at `params`, with the gradient written to `grad`.
    fn loss_and_grad(&self, params: &[f64], batch: &[&Example], grad: &mut [f64]) -> f64;
}

/// Linear regression with bias under mean squared error.
///
/// Parameters are `[w_0, .., w_{d-1}, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredError {
    pub dim: usize,
}

impl SquaredError {
    fn predict(&self, params: &[f64], x: &[f64]) -> f64 {
        let (w, b) = params.split_at(self.dim);
        w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b[0]
    }
}

impl Objective for SquaredError {
    fn n_params(&self) -> usize {
        self.dim + 1
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|ex| (self.predict(params, &ex.features) - ex.target).powi(2))
            .sum();
        total / batch.len() as f64
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[&Example], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let scale = 2.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            let residual = self.predict(params, &ex.features) - ex.target;
            total += residual * residual;
            let (gw, gb) = grad.split_at_mut(self.dim);
            for (g, x) in gw.iter_mut().zip(&ex.features) {
                *g += scale * residual * x;
            }
            gb[0] += scale * residual;
        }
        total / batch.len() as f64
    }
}

/// Multinomial logistic regression under cross-entropy.
///
/// Parameters are row-major `classes x (dim + 1)`; the last column of each
/// row is the class bias. Targets hold the class index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub dim: usize,
    pub classes: usize,
}

impl CrossEntropy {
    fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        params
            .chunks_exact(self.dim + 1)
            .map(|row| {
                let (w, b) = row.split_at(self.dim);
                w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b[0]
            })
            .collect()
    }

    fn class_of(&self, ex: &Example) -> usize {
        let c = ex.target as usize;
        debug_assert!(c < self.classes && ex.target.fract() == 0.0);
        c.min(self.classes - 1)
    }

    /// `-log softmax(z)[c]` via log-sum-exp.
    fn nll(logits: &[f64], c: usize) -> f64 {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[c]
    }
}

impl Objective for CrossEntropy {
    fn n_params(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|ex| Self::nll(&self.logits(params, &ex.features), self.class_of(ex)))
            .sum();
        total / batch.len() as f64
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[&Example], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            let logits = self.logits(params, &ex.features);
            let c = self.class_of(ex);
            total += Self::nll(&logits, c);
            let probs = softmax(&logits);
            for (k, row) in grad.chunks_exact_mut(self.dim + 1).enumerate() {
                let delta = scale * (probs[k] - if k == c { 1.0 } else { 0.0 });
                let (gw, gb) = row.split_at_mut(self.dim);
                for (g, x) in gw.iter_mut().zip(&ex.features) {
                    *g += delta * x;
                }
                gb[0] += delta;
            }
        }
        total * scale
    }
}

/// Plain fixed-step stochastic gradient descent on an [`Objective`].
#[derive(Debug, Clone)]
pub struct SgdLearner<O> {
    objective: O,
    params: Vec<f64>,
    grad: Vec<f64>,
    lr: f64,
}

impl<O: Objective> SgdLearner<O> {
    pub fn new(objective: O, params: Vec<f64>, lr: f64) -> Result<Self> {
        if params.len() != objective.n_params() {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                objective.n_params(),
                params.len()
            )));
        }
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::config(format!("invalid SGD learning rate {lr}")));
        }
        let grad = vec![0.0; params.len()];
        Ok(Self {
            objective,
            params,
            grad,
            lr,
        })
    }

    pub fn objective(&self) -> &O {
        &self.objective
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn gradient(&self, batch: &[&Example]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.objective.loss_and_grad(&self.params, batch, &mut grad);
        grad
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::contract("parameter length mismatch"));
        }
        self.params = params;
        Ok(())
    }
}

impl<O: Objective> Learner for SgdLearner<O> {
    fn train_step(&mut self, batch: &[&Example]) -> StepLosses {
        let loss_before = self
            .objective
            .loss_and_grad(&self.params, batch, &mut self.grad);
        for (p, g) in self.params.iter_mut().zip(&self.grad) {
            *p -= self.lr * g;
        }
        let loss_after = self.objective.loss(&self.params, batch);
        StepLosses {
            loss_before,
            loss_after,
        }
    }

    fn eval(&self, batch: &[&Example]) -> f64 {
        self.objective.loss(&self.params, batch)
    }

    fn params(&self) -> &[f64] {
        &self.params
    }
}
