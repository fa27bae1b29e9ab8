//! Deterministic seed expansion: one root seed fans out to per-component
//! streams without depending on hasher implementations that may change
//! between toolchains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a textual tag.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    tag.bytes().fold(splitmix64(root), |acc, b| splitmix64(acc ^ b as u64))
}

/// Mixes a root seed with a sequence of integers.
pub fn derive_seed_n(root: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(root), |acc, &p| splitmix64(acc ^ p))
}

pub fn rng_for(root: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag))
}
