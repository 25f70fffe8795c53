//! Seeded random streams.
//!
//! Every stochastic decision in the crate draws from a [`ChaCha8Rng`] derived
//! from the global seed plus a list of tags (stage, epoch, batch, worker, ...),
//! so results do not depend on evaluation order or worker count.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Returns an independent stream for `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Well-known tag values so different subsystems never share a stream.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const SAMPLER: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const STEP: u64 = 5;
    pub const PROBE: u64 = 6;
    pub const MASK: u64 = 7;
    pub const SPLIT: u64 = 8;
}
