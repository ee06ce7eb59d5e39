//! Seed handling. A single 64-bit seed is expanded into independent generators
//! by selecting ChaCha stream ids, so the generator for trial `t` depends only
//! on `(seed, t)` and not on how many trials run or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SketchRng = ChaCha8Rng;

/// Stream ids at or above this value are reserved for internal purposes so they
/// never collide with trial indices.
const RESERVED: u64 = 1 << 63;

pub(crate) const STREAM_SAMPLING: u64 = RESERVED;
pub(crate) const STREAM_ONE_PASS: u64 = RESERVED + 1;
pub(crate) const STREAM_POWER: u64 = RESERVED + 2;
pub(crate) const STREAM_SUBSET: u64 = RESERVED + 3;
pub(crate) const STREAM_WITNESS: u64 = RESERVED + 4;

pub fn derive_rng(seed: u64, stream: u64) -> SketchRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for trial `trial` of an experiment driven by `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_rng(seed, trial as u64).next_u64()
}

/// Generator for trial `trial`; independent of every other trial's generator.
pub fn trial_rng(seed: u64, trial: usize) -> SketchRng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, trial))
}
