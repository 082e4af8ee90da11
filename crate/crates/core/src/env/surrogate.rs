//! Synthetic multi-facet tasks standing in for real corpora.
//!
//! Inputs are laid out as `[shared | private_0 | private_1 | ...]`. An
//! example of facet `f` has standard normal shared features, standard normal
//! features in its own private block and zeros elsewhere. Its target mixes a
//! shared and a facet-specific linear function:
//!
//! ```text
//! y = s * (sqrt(a) <w_shared, x_shared> + sqrt(1 - a) <w_f, x_f>) + sigma_f * eps
//! ```
//!
//! where `a` is the facet's shared fraction and `s` its signal level (1 for
//! dev examples, `train_signal` for training examples). With a classifier,
//! the same construction produces one score per class and the target is the
//! arg-max class.

use rand::Rng;
use rand_distr::{Distribution as _, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::dataset::{Example, FacetedDataset};
use super::learner::{CrossEntropy, Learner, SgdLearner, SquaredError};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetSpec {
    pub name: String,
    pub count: usize,
    #[serde(default = "default_private_dim")]
    pub private_dim: usize,
    /// Label noise; drawn from the task's `noise_range` when absent.
    #[serde(default)]
    pub noise: Option<f64>,
    /// Weight of the shared function in this facet; the task default when
    /// absent.
    #[serde(default)]
    pub shared_fraction: Option<f64>,
    /// Signal level of training targets. 0 turns the facet's training labels
    /// into pure noise while its dev examples stay clean of corruption.
    #[serde(default = "one")]
    pub train_signal: f64,
}

fn default_private_dim() -> usize {
    8
}

fn one() -> f64 {
    1.0
}

impl FacetSpec {
    pub fn new(name: &str, count: usize) -> Self {
        Self {
            name: name.to_string(),
            count,
            private_dim: default_private_dim(),
            noise: None,
            shared_fraction: None,
            train_signal: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Regression,
    Classification { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateTaskSpec {
    pub facets: Vec<FacetSpec>,
    pub shared_dim: usize,
    pub shared_fraction: f64,
    /// Range for facet noise levels that are not set explicitly.
    pub noise_range: (f64, f64),
    pub dev_per_facet: usize,
    pub model: ModelKind,
    pub sgd_lr: f64,
    pub init_scale: f64,
}

impl Default for SurrogateTaskSpec {
    /// Five facets whose sizes follow a skewed multi-domain corpus
    /// (2480, 4673, 2229, 180 and 5000 examples).
    fn default() -> Self {
        let facets = [
            ("med", 2480),
            ("it", 4673),
            ("law", 2229),
            ("koran", 180),
            ("subs", 5000),
        ]
        .into_iter()
        .map(|(name, count)| FacetSpec::new(name, count))
        .collect();
        Self {
            facets,
            shared_dim: 16,
            shared_fraction: 0.5,
            noise_range: (0.1, 1.0),
            dev_per_facet: 200,
            model: ModelKind::Regression,
            sgd_lr: 0.02,
            init_scale: 0.0,
        }
    }
}

impl SurrogateTaskSpec {
    /// Two facets of identical inputs: `a` has clean labels, `b` has labels
    /// that carry no signal at all. Training on `b` can only hurt.
    pub fn separable() -> Self {
        let a = FacetSpec {
            private_dim: 0,
            noise: Some(0.1),
            shared_fraction: Some(1.0),
            ..FacetSpec::new("a", 2000)
        };
        let b = FacetSpec {
            private_dim: 0,
            noise: Some(1.0),
            shared_fraction: Some(1.0),
            train_signal: 0.0,
            ..FacetSpec::new("b", 2000)
        };
        Self {
            facets: vec![a, b],
            shared_dim: 16,
            shared_fraction: 1.0,
            noise_range: (0.1, 0.1),
            dev_per_facet: 500,
            model: ModelKind::Regression,
            sgd_lr: 0.02,
            init_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.facets.is_empty() {
            return Err(Error::config("surrogate task needs at least one facet"));
        }
        for f in &self.facets {
            if f.count == 0 {
                return Err(Error::config(format!("facet `{}` has no examples", f.name)));
            }
            if let Some(noise) = f.noise {
                if !(noise.is_finite() && noise >= 0.0) {
                    return Err(Error::config(format!(
                        "facet `{}` has invalid noise {noise}",
                        f.name
                    )));
                }
            }
            if let Some(a) = f.shared_fraction {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::config(format!(
                        "facet `{}` shared fraction {a} outside [0, 1]",
                        f.name
                    )));
                }
            }
            if !f.train_signal.is_finite() {
                return Err(Error::config("non-finite train signal"));
            }
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return Err(Error::config("shared fraction outside [0, 1]"));
        }
        let (lo, hi) = self.noise_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::config(format!("invalid noise range ({lo}, {hi})")));
        }
        if self.input_dim() == 0 {
            return Err(Error::config("surrogate task has no input features"));
        }
        if self.dev_per_facet == 0 {
            return Err(Error::config(
                "dev set needs at least one example per facet",
            ));
        }
        if !(self.sgd_lr.is_finite() && self.sgd_lr >= 0.0) {
            return Err(Error::config(format!(
                "invalid SGD learning rate {}",
                self.sgd_lr
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::config("invalid init scale"));
        }
        if let ModelKind::Classification { classes } = self.model {
            if classes < 2 {
                return Err(Error::config("classification needs at least two classes"));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.shared_dim + self.facets.iter().map(|f| f.private_dim).sum::<usize>()
    }

    fn outputs(&self) -> usize {
        match self.model {
            ModelKind::Regression => 1,
            ModelKind::Classification { classes } => classes,
        }
    }
}

/// Ground truth behind a generated task.
#[derive(Debug, Clone)]
pub struct SurrogateTask {
    pub dataset: FacetedDataset,
    /// Label noise actually used per facet.
    pub noise: Vec<f64>,
}

struct Truth {
    /// `outputs x shared_dim`
    shared: Vec<Vec<f64>>,
    /// per facet, `outputs x private_dim`
    private: Vec<Vec<Vec<f64>>>,
    offsets: Vec<usize>,
}

fn gaussian_rows<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let sd = if dim == 0 {
        0.0
    } else {
        1.0 / (dim as f64).sqrt()
    };
    (0..rows)
        .map(|_| {
            (0..dim)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Generates the dataset of `spec` from `rng`.
pub fn generate_task<R: Rng + ?Sized>(
    spec: &SurrogateTaskSpec,
    rng: &mut R,
) -> Result<SurrogateTask> {
    spec.validate()?;
    let outputs = spec.outputs();
    let shared = gaussian_rows(outputs, spec.shared_dim, rng);
    let private = spec
        .facets
        .iter()
        .map(|f| gaussian_rows(outputs, f.private_dim, rng))
        .collect();
    let mut offsets = Vec::with_capacity(spec.facets.len());
    let mut next = spec.shared_dim;
    for f in &spec.facets {
        offsets.push(next);
        next += f.private_dim;
    }
    let truth = Truth {
        shared,
        private,
        offsets,
    };

    let (lo, hi) = spec.noise_range;
    let noise: Vec<f64> = spec
        .facets
        .iter()
        .map(|f| {
            f.noise.unwrap_or_else(|| {
                if hi > lo {
                    Uniform::new_inclusive(lo, hi)
                        .expect("validated noise range")
                        .sample(rng)
                } else {
                    lo
                }
            })
        })
        .collect();

    let mut facets = Vec::with_capacity(spec.facets.len());
    for (f, fs) in spec.facets.iter().enumerate() {
        let examples = (0..fs.count)
            .map(|_| draw_example(spec, &truth, f, noise[f], fs.train_signal, rng))
            .collect();
        facets.push(examples);
    }
    let mut dev = Vec::with_capacity(spec.dev_per_facet * spec.facets.len());
    for (f, &sigma) in noise.iter().enumerate() {
        for _ in 0..spec.dev_per_facet {
            dev.push(draw_example(spec, &truth, f, sigma, 1.0, rng));
        }
    }
    let names = spec.facets.iter().map(|f| f.name.clone()).collect();
    Ok(SurrogateTask {
        dataset: FacetedDataset::new(names, facets, dev)?,
        noise,
    })
}

fn draw_example<R: Rng + ?Sized>(
    spec: &SurrogateTaskSpec,
    truth: &Truth,
    facet: usize,
    noise: f64,
    signal: f64,
    rng: &mut R,
) -> Example {
    let fs = &spec.facets[facet];
    let mut features = vec![0.0; spec.input_dim()];
    for x in &mut features[..spec.shared_dim] {
        *x = rng.sample(StandardNormal);
    }
    let off = truth.offsets[facet];
    for x in &mut features[off..off + fs.private_dim] {
        *x = rng.sample(StandardNormal);
    }
    let a = fs.shared_fraction.unwrap_or(spec.shared_fraction);
    let (ws, wp) = (a.sqrt(), (1.0 - a).sqrt());
    let scores: Vec<f64> = (0..spec.outputs())
        .map(|k| {
            let shared: f64 = truth.shared[k]
                .iter()
                .zip(&features[..spec.shared_dim])
                .map(|(w, x)| w * x)
                .sum();
            let private: f64 = truth.private[facet][k]
                .iter()
                .zip(&features[off..off + fs.private_dim])
                .map(|(w, x)| w * x)
                .sum();
            let eps: f64 = rng.sample(StandardNormal);
            signal * (ws * shared + wp * private) + noise * eps
        })
        .collect();
    let target = match spec.model {
        ModelKind::Regression => scores[0],
        ModelKind::Classification { .. } => crate::bandit::argmax(&scores) as f64,
    };
    Example {
        features,
        target,
        facet,
    }
}

/// Fresh SGD learner for `spec`, initialized from `rng`.
pub fn make_surrogate_learner<R: Rng + ?Sized>(
    spec: &SurrogateTaskSpec,
    rng: &mut R,
) -> Result<Box<dyn Learner>> {
    spec.validate()?;
    make_learner(
        spec.model,
        spec.input_dim(),
        spec.sgd_lr,
        spec.init_scale,
        rng,
    )
}

/// SGD learner of the given kind over `dim` input features.
pub fn make_learner<R: Rng + ?Sized>(
    model: ModelKind,
    dim: usize,
    lr: f64,
    init_scale: f64,
    rng: &mut R,
) -> Result<Box<dyn Learner>> {
    let init = |n: usize, rng: &mut R| -> Result<Vec<f64>> {
        if init_scale == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let normal =
            Normal::new(0.0, init_scale).map_err(|e| Error::config(format!("init scale: {e}")))?;
        Ok((0..n).map(|_| normal.sample(rng)).collect())
    };
    Ok(match model {
        ModelKind::Regression => {
            let obj = SquaredError { dim };
            Box::new(SgdLearner::new(obj, init(dim + 1, rng)?, lr)?)
        }
        ModelKind::Classification { classes } => {
            let obj = CrossEntropy { dim, classes };
            Box::new(SgdLearner::new(obj, init(classes * (dim + 1), rng)?, lr)?)
        }
    })
}
