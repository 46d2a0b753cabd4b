//! Deterministic substreams keyed by `(seed, purpose, index)`.
//!
//! Every random draw in the crate comes from a stream derived here, so the
//! output of a run never depends on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags; distinct tags never share a stream for the same index.
pub mod tag {
    pub const EPISODE: u64 = 0x6570_6973;
    pub const NOISE_ROW: u64 = 0x6e6f_6973;
    pub const TRAINING: u64 = 0x7472_6169;
    pub const CARTPOLE_EPISODE: u64 = 0x6361_7274;
    pub const CONDITION: u64 = 0x636f_6e64;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the three keys into one 64-bit value; each stage is a bijection.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ purpose) ^ index)
}

pub fn substream(seed: u64, purpose: u64, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index))
}
