//! Seeded random streams.
//!
//! Every consumer derives its generator from one 64-bit seed plus a stream id,
//! using ChaCha (a counter-based generator) so draws are identical across
//! platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named stream ids so independent consumers never share draws.
pub mod stream {
    pub const EMBEDDING: u64 = 1;
    pub const LEVELS: u64 = 2;
    pub const CONCEPTS: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const FEATURES: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const INIT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const LEVEL_PICK: u64 = 9;
    pub const RESAMPLE: u64 = 10;
    pub const PERMUTATION: u64 = 11;
    pub const REGIMES: u64 = 12;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sub-stream for one item of a family (e.g. one epoch, one seed of a sweep).
pub fn seeded_sub(seed: u64, stream: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
