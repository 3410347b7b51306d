//! Deterministic seed derivation.
//!
//! Every randomized component draws from its own ChaCha stream derived from
//! the run seed plus a purpose tag, so adding or reordering consumers in one
//! part of the code never shifts the draws seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; stable mixing independent of std hasher internals.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a list of stream tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut acc = mix(seed ^ 0x9e3779b97f4a7c15);
    for &t in tags {
        acc = mix(acc.wrapping_add(mix(t.wrapping_add(0x9e3779b97f4a7c15))));
    }
    acc
}

/// A ChaCha stream for (`seed`, tags).
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

/// Well-known stream tags, to keep call sites collision-free.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const PERMUTE: u64 = 5;
    pub const REINIT: u64 = 6;
    pub const ENTANGLE: u64 = 7;
    pub const EXPLORE: u64 = 8;
    pub const RANDOM_POLICY: u64 = 9;
}
