//! Seed derivation for deterministic, order-independent randomness.
//!
//! Every random draw in an episode comes from a [`rand_chacha::ChaCha8Rng`]
//! whose seed is derived from the episode seed plus a list of integer tags
//! (purpose, depth, candidate index, ...). Because the stream for a given
//! role never depends on how many draws other roles consumed, concurrent
//! rollouts see exactly the same randomness as sequential ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 output function. Cheap, well distributed,
/// and good enough for decorrelating seeds (it is not used as a stream
/// generator itself).
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a base seed with a sequence of tags into a new seed.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, tag| splitmix64(acc ^ tag))
}

/// Deterministic generator for the given base seed and tag path.
pub fn rng_from(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, tags))
}
