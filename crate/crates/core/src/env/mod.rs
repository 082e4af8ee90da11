//! Worlds the scheduler acts in: a stochastic bandit testbed and faceted
//! training of a learner.

pub mod bandit_env;
pub mod dataset;
pub mod learner;
pub mod surrogate;

use serde::{Deserialize, Serialize};

pub use bandit_env::{BanditTestbed, PayoffKind, StochasticBanditEnv};
use dataset::FacetedDataset;
use learner::{Learner, StepLosses};

use crate::bandit::{Distribution, Exp3Config, Exp3State};
use crate::error::{Error, Result};
use crate::rewards::{RewardKind, RewardWindow};
use crate::rng::ReplicaStreams;

/// One log row per training step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Facet trained on; absent for mixed batches.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub arm: Option<usize>,
    /// Sampling distribution in effect for this step.
    pub probs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scaled_reward: Option<f64>,
    /// Loss the reward was computed from: on the dev batch for `dev-`
    /// rewards, otherwise on the training batch.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_after: Option<f64>,
    /// Loss on the full balanced dev set, on evaluation steps.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_loss: Option<f64>,
    /// Cumulative pseudo-regret, bandit-testbed runs only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSizes {
    pub train: usize,
    pub eval: usize,
}

fn checked(losses: StepLosses, step: u64) -> Result<StepLosses> {
    if losses.loss_before.is_finite() && losses.loss_after.is_finite() {
        Ok(losses)
    } else {
        Err(Error::Diverged {
            step,
            detail: format!(
                "learner returned non-finite loss ({} -> {})",
                losses.loss_before, losses.loss_after
            ),
        })
    }
}

fn checked_eval(loss: f64, step: u64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged {
            step,
            detail: format!("dev loss is {loss}"),
        })
    }
}

/// One bandit-scheduled training step.
///
/// Draws an arm from the current policy, trains on a uniform batch of that
/// facet, measures progress according to `reward`, rescales it through
/// `window` and updates the bandit with the probability recorded at draw
/// time. `dev-` rewards evaluate the same dev batch before and after the
/// update.
#[allow(clippy::too_many_arguments)]
pub fn run_curriculum_step(
    state: &mut Exp3State,
    config: &Exp3Config,
    learner: &mut dyn Learner,
    dataset: &FacetedDataset,
    reward: RewardKind,
    window: &mut RewardWindow,
    streams: &mut ReplicaStreams,
    sizes: BatchSizes,
) -> Result<StepRecord> {
    if config.n_arms != dataset.n_facets() {
        return Err(Error::config(format!(
            "bandit has {} arms but the dataset has {} facets",
            config.n_arms,
            dataset.n_facets()
        )));
    }
    let step = state.step();
    let dist = state.policy(config)?;
    let arm = dist.sample(&mut streams.scheduler);
    let prob = dist.prob(arm);
    let batch = dataset.sample_facet_batch(arm, sizes.train, &mut streams.data);

    let (losses, raw) = if reward.uses_dev() {
        let dev_batch = dataset.sample_eval_batch(sizes.eval, &mut streams.dev)?;
        let loss_before = checked_eval(learner.eval(&dev_batch), step)?;
        checked(learner.train_step(&batch), step)?;
        let loss_after = checked_eval(learner.eval(&dev_batch), step)?;
        let losses = StepLosses {
            loss_before,
            loss_after,
        };
        (losses, reward.raw_reward(loss_before, loss_after)?)
    } else {
        let losses = checked(learner.train_step(&batch), step)?;
        (
            losses,
            reward.raw_reward(losses.loss_before, losses.loss_after)?,
        )
    };

    let scaled = window.push_and_rescale(raw)?;
    state.update(config, arm, scaled, prob)?;
    Ok(StepRecord {
        step,
        arm: Some(arm),
        probs: dist.into(),
        raw_reward: Some(raw),
        scaled_reward: Some(scaled),
        loss_before: Some(losses.loss_before),
        loss_after: Some(losses.loss_after),
        ..StepRecord::default()
    })
}

/// One step of a fixed facet distribution with single-facet batches. Uses
/// the same random streams as [`run_curriculum_step`], so a uniform schedule
/// and a bandit with `exploration_rate = 1` draw identical arms.
pub fn run_static_step(
    step: u64,
    dist: &Distribution,
    learner: &mut dyn Learner,
    dataset: &FacetedDataset,
    streams: &mut ReplicaStreams,
    batch_size: usize,
) -> Result<StepRecord> {
    let arm = dist.sample(&mut streams.scheduler);
    let batch = dataset.sample_facet_batch(arm, batch_size, &mut streams.data);
    let losses = checked(learner.train_step(&batch), step)?;
    Ok(StepRecord {
        step,
        arm: Some(arm),
        probs: dist.probs().to_vec(),
        loss_before: Some(losses.loss_before),
        loss_after: Some(losses.loss_after),
        ..StepRecord::default()
    })
}

/// One step on a batch drawn example-by-example from the concatenated
/// corpus. `corpus_dist` is logged as the effective facet distribution.
pub fn run_mixed_step(
    step: u64,
    corpus_dist: &Distribution,
    learner: &mut dyn Learner,
    dataset: &FacetedDataset,
    streams: &mut ReplicaStreams,
    batch_size: usize,
) -> Result<(StepRecord, Vec<usize>)> {
    let batch = dataset.sample_mixed_batch(batch_size, &mut streams.data);
    let facets = batch.iter().map(|ex| ex.facet).collect();
    let losses = checked(learner.train_step(&batch), step)?;
    let record = StepRecord {
        step,
        probs: corpus_dist.probs().to_vec(),
        loss_before: Some(losses.loss_before),
        loss_after: Some(losses.loss_after),
        ..StepRecord::default()
    };
    Ok((record, facets))
}
