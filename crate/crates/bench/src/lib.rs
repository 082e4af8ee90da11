//! Shared fixtures for the scheduler benchmarks.

use facetbandit::{Exp3Config, Exp3State};
use rand::Rng;

/// An EXP3 state after `warmup` random updates, so weights are not all equal.
pub fn warmed_state<R: Rng>(cfg: &Exp3Config, warmup: usize, rng: &mut R) -> Exp3State {
    let mut state = Exp3State::new(cfg).expect("valid config");
    for _ in 0..warmup {
        let policy = state.policy(cfg).expect("valid config");
        let arm = policy.sample(rng);
        let reward = rng.random_range(-1.0..=1.0);
        state
            .update(cfg, arm, reward, policy.prob(arm))
            .expect("finite update");
    }
    state
}
