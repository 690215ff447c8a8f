//! Deterministic seed derivation.
//!
//! Every random stream in an experiment is keyed by a tuple such as
//! `(base seed, graph id, trial, evaluation index)`. The tuple is mixed into a
//! 64-bit seed with SplitMix64 finalization, so streams for different keys are
//! independent and can be created in any order on any worker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a sequence of integers into one seed.
pub fn derive(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_0F_DA5B0u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    rng(derive(parts))
}
