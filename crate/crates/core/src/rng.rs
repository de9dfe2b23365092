//! Seeded random streams. Every pipeline stage draws from its own ChaCha
//! stream so changing one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Emitter = 0,
    Routing = 1,
    BeamSplitter = 2,
    Detector = 3,
}

pub fn stage_rng(seed: u64, stage: Stage) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Seed of replica `index` for a run seeded with `seed`.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}
