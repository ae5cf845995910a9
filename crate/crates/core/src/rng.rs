//! Deterministic seed splitting.
//!
//! Every random stream in the crate is keyed by a 64-bit seed derived from a
//! master seed and a path of stream indices. Derivation uses the SplitMix64
//! finalizer, so `derive_seed(master, &[t])` is the seed of Monte-Carlo trial
//! `t` and `derive_seed(trial_seed, &[i, k])` keys the samples of node `k` at
//! iteration `i`. Other implementations reproduce our streams by applying the
//! same mixing and seeding `ChaCha8Rng::seed_from_u64` with the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `seed`, one index at a time.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &idx| splitmix64(acc ^ splitmix64(idx.wrapping_add(GOLDEN))))
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
