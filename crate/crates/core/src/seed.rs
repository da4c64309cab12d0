//! Named random streams.
//!
//! Every source of randomness in a run (graph, user parameters, contexts,
//! noise, user arrivals, each policy) draws from its own stream derived from
//! a parent seed and a label. Adding a stream never shifts another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the simulator.
pub type SimRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a stream label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(parent) ^ h)
}

/// Seed of replication `r` under `master`.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    master ^ replication
}

/// A seeded generator for the stream `label` under `parent`.
pub fn stream(parent: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parent, label))
}
