//! Reproducible random streams.
//!
//! All samplers draw from ChaCha8 (`rand_chacha` 0.9) seeded from a 64-bit
//! seed through `SeedableRng::seed_from_u64`, which fixes the byte stream
//! across platforms. Sub-streams (benchmark trials, noise fields) derive
//! their seeds with [`split_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `master ^ golden * (index + 1)`.
///
/// The derived seed depends only on `(master, index)`, so adding trials never
/// shifts the streams of earlier ones.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
