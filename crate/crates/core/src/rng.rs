//! Seed derivation. All randomness flows from a user seed through
//! [`ChaCha8Rng`] streams so results are stable across platforms, crate
//! versions and thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of `seed` (e.g. one per tree or per grid cell).
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rng keyed by several components, e.g. (seed, sentence hash, op code).
pub fn keyed(seed: u64, parts: &[u64]) -> Rng {
    let key = parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)));
    ChaCha8Rng::seed_from_u64(key)
}
