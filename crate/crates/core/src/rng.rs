//! Seed derivation for independent, reproducible random streams.
//!
//! Every consumer of randomness (initialisation, client selection, a client's
//! triple sampling in a given round, its mask draw) gets its own generator
//! derived from the experiment seed and a path of integers. Two streams with
//! different paths never share state, so work can be reordered or run in
//! parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_SELECT: u64 = 2;
pub(crate) const TAG_TRIPLES: u64 = 3;
pub(crate) const TAG_MASK: u64 = 4;
pub(crate) const TAG_STICKY: u64 = 5;
pub(crate) const TAG_RANDOM_SCORES: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `seed` and `path` into a single 64-bit value.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A generator for the stream identified by `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, path))
}

/// Uniform value in `[0, 1)` that is a pure function of `(seed, path)`.
pub(crate) fn unit_hash(seed: u64, path: &[u64]) -> f64 {
    (derive_seed(seed, path) >> 11) as f64 / (1u64 << 53) as f64
}
