//! Counter-based seed splitting. Every random number in the crate is a pure
//! function of a seed and an integer counter, so results never depend on
//! task scheduling or on how many tasks run.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed of task `task` under `master`.
pub fn derive_seed(master: u64, task: u64) -> u64 {
    stream(master, task).next_u64()
}

/// An RNG positioned at the start of stream `id` of `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform draw in `[0, 1)` addressed by `(seed, id)`.
pub fn uniform_at(seed: u64, id: u64) -> f64 {
    stream(seed, id).random::<f64>()
}
