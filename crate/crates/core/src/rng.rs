//! Per-index random streams.
//!
//! Every stream is keyed by `(seed, index)` so a sample's draws never depend on
//! which worker produced it or in which order shards ran.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for sample `index` of the experiment seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut bytes = [0u8; 32];
    let mut state = splitmix64(seed) ^ splitmix64(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    for chunk in bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    Xoshiro256PlusPlus::from_seed(bytes)
}

/// Derives a sub-seed for an independent purpose (e.g. probe vectors vs walks).
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    splitmix64(seed ^ splitmix64(purpose))
}
