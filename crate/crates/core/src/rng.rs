//! Seeded random streams.
//!
//! Every consumer of randomness in an episode owns its own stream, derived
//! from the master seed and a role. Streams are ChaCha8 generators keyed by the
//! seed with the role folded into the ChaCha stream counter, so draws taken by
//! one role never shift another role's sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Who is drawing from a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    /// Episode-level draws (warm-start history).
    Engine,
    /// Initial disposition draws in random-p mode.
    Init,
    /// An agent's access coin flips.
    Decide(usize),
    /// An agent's adaptation perturbations.
    Adapt(usize),
}

impl StreamRole {
    fn stream_id(self) -> u64 {
        match self {
            StreamRole::Engine => 0,
            StreamRole::Init => 1,
            StreamRole::Decide(i) => (1 << 32) | i as u64,
            StreamRole::Adapt(i) => (2 << 32) | i as u64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    role: StreamRole,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, role: StreamRole) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(role.stream_id());
        Self { seed, role, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn role(&self) -> StreamRole {
        self.role
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[lo, hi]`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..=max`.
    pub fn uniform_int(&mut self, max: u32) -> u32 {
        self.rng.random_range(0..=max)
    }

    /// One draw; true with probability `p`. `p = 1` always succeeds and
    /// `p = 0` never does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
