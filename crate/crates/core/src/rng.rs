//! Deterministic random streams for experiment replicas.
//!
//! Every experiment has a single `u64` master seed. All randomness is drawn
//! from ChaCha8 generators keyed by that seed (expanded to a 256-bit key by
//! [`SeedableRng::seed_from_u64`]). Streams are separated with ChaCha's
//! 64-bit stream id:
//!
//! ```text
//! stream_id = (replica << 8) | role
//! ```
//!
//! where `role` names the consumer ([`StreamRole`]). ChaCha streams sharing a
//! key never overlap, so two replicas, or two roles inside one replica, can
//! never see the same sequence of words. The layout depends only on the master
//! seed, the replica index and the role, so results are reproducible across
//! platforms and independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

/// Consumer of a random stream inside one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamRole {
    /// Arm selection (bandit or static schedule).
    Scheduler = 0,
    /// Training batch composition.
    Data = 1,
    /// Dev batches used for reward evaluation.
    Dev = 2,
    /// Learner parameter initialization.
    LearnerInit = 3,
    /// Synthetic task or dataset generation.
    Task = 4,
    /// Payoff draws of a stochastic bandit environment.
    Payoff = 5,
}

/// Stream for `role` within `replica` of the experiment seeded by `master_seed`.
pub fn stream(master_seed: u64, replica: u32, role: StreamRole) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(replica, role));
    rng
}

pub fn stream_id(replica: u32, role: StreamRole) -> u64 {
    (u64::from(replica) << 8) | role as u64
}

/// The full set of streams one replica consumes.
#[derive(Debug, Clone)]
pub struct ReplicaStreams {
    pub scheduler: ReplicaRng,
    pub data: ReplicaRng,
    pub dev: ReplicaRng,
    pub payoff: ReplicaRng,
}

impl ReplicaStreams {
    pub fn new(master_seed: u64, replica: u32) -> Self {
        Self {
            scheduler: stream(master_seed, replica, StreamRole::Scheduler),
            data: stream(master_seed, replica, StreamRole::Data),
            dev: stream(master_seed, replica, StreamRole::Dev),
            payoff: stream(master_seed, replica, StreamRole::Payoff),
        }
    }
}
