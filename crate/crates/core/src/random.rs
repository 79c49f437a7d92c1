//! Seeded random sources.
//!
//! Every stochastic routine in the crate takes its generator explicitly.
//! ChaCha8 is used throughout because its stream is fixed across platforms
//! and releases, which keeps generated scenarios replayable from a seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of item `index` in a batch from the batch master seed.
///
/// `pair_seed = splitmix64(master_seed ^ splitmix64(index))`.
pub fn mix_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
