//! Seed derivation for reproducible, parallel random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha`, counter based) seeded
//! from a 64-bit value. Sub-stream seeds are derived from a base seed and a
//! tuple of indices by chained SplitMix64 finalization, so any
//! (sample, transmission) stream can be produced independently of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identity of the generator, recorded in dataset manifests.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.9), seeds derived by SplitMix64 chaining";

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
