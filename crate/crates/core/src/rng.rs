//! Deterministic seed derivation.
//!
//! Every random decision in the crate draws from a ChaCha stream whose seed
//! is derived from a user seed plus a purpose tag. Keeping independent
//! decisions on independent streams is what lets, e.g., a distractor count
//! change without disturbing which triples an instance contains.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams.
pub mod stream {
    pub const PARAMS: u64 = 0x01;
    pub const TRIPLES: u64 = 0x02;
    pub const RELATIONS: u64 = 0x03;
    pub const DISTRACTORS: u64 = 0x04;
    pub const HIDDEN_INIT: u64 = 0x05;
    pub const BATCH: u64 = 0x06;
    pub const BASELINE: u64 = 0x07;
    pub const PERIODIC: u64 = 0x08;
    pub const DATASET: u64 = 0x09;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a tag (or counter) into a seed.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Fold several counters into one derived seed.
pub fn mix_many(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |s, &t| mix(s, t))
}

/// RNG seeded directly from a 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG on the derived stream `(seed, tag)`.
pub fn stream_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    seeded(mix(seed, tag))
}
