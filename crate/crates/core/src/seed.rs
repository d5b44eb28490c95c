//! Deterministic seed derivation.
//!
//! A run has one global seed. Each stage gets `derive_seed(global, name)` and
//! any per-item stream inside a stage uses `stream_seed(stage_seed, index)`.
//! Both functions are fixed here (FNV-1a and splitmix64) so derived seeds do
//! not change across toolchains.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for a named stage.
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    splitmix64(global ^ fnv1a(stage.as_bytes()))
}

/// Seed for the `index`-th independent stream under `seed`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(index))
}
