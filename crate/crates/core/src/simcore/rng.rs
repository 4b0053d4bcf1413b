//! Seeded random streams.
//!
//! Every stochastic entity (a link, the key-material expander, ...) draws from
//! its own xoshiro256++ stream. The stream seed is derived from the run seed
//! and a stable entity name, so adding or reordering entities never perturbs
//! another entity's draws.
//!
//! Derivation: `stream_seed = splitmix64_finalize(run_seed ^ fnv1a64(name))`,
//! then `Xoshiro256PlusPlus::seed_from_u64(stream_seed)` (which expands the
//! 64-bit seed through SplitMix64 into the 256-bit state).

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 output function (Steele, Lea, Flood).
pub fn splitmix64_finalize(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(run_seed: u64, entity: &str) -> u64 {
    splitmix64_finalize(run_seed ^ fnv1a64(entity.as_bytes()))
}

pub fn substream(run_seed: u64, entity: &str) -> SimRng {
    SimRng::seed_from_u64(stream_seed(run_seed, entity))
}
