//! Seeded, splittable random streams.
//!
//! Every consumer of randomness asks for its own ChaCha8 stream, identified by
//! a (seed, stream id) pair. ChaCha is counter based, so two streams with the
//! same seed never overlap and the draws do not depend on platform or thread
//! schedule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SPLIT: u64 = 1;
pub const STAGE_ORDER: u64 = 2;
pub const BINARIZE: u64 = 3;
pub const SYNTHETIC: u64 = 4;
pub const MONTE_CARLO: u64 = 5;
/// Stage `s` of a training run draws pairs from stream `TRAIN_BASE + s`.
pub const TRAIN_BASE: u64 = 1 << 16;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform index in `0..n`. Draws a `u64` so the sequence is identical on
/// 32- and 64-bit targets.
pub fn index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    rng.random_range(0..n as u64) as usize
}

pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    items.shuffle(rng);
}
