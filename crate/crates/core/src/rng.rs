//! Deterministic random streams.
//!
//! Every stochastic operation takes an explicit stream. Independent work items
//! (samples, batch elements, sweep cells) get their own stream derived from a
//! root seed and a key path, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the work item addressed by `keys` under `seed`.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

/// Stream for the work item addressed by `keys` under `seed`.
pub fn derive(seed: u64, keys: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

#[inline]
pub fn normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}
