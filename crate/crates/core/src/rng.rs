//! Seeding of per-replica random streams.
//!
//! Every replica owns an independent ChaCha stream whose seed is a hash of
//! the master seed and the replica index, so results do not depend on the
//! order (or thread) in which replicas execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` under `master`.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0xA5A5_5A5A_DEAD_BEEF)))
}

/// Seed for a named sub-stream (graph sampling, dynamics, ...) of one replica.
pub fn substream(seed: u64, tag: u64) -> u64 {
    splitmix64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ splitmix64(tag))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..10_000).map(|i| replica_seed(7, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(replica_seed(7, 0), replica_seed(8, 0));
    }
}
