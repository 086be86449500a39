//! Deterministic derivation of per-stage RNG seeds from a single master seed.

/// SplitMix64 finalizer. Decorrelates nearby inputs so that derived seeds
/// for consecutive streams do not produce overlapping ChaCha states.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent seed for stream `stream` of a stage seeded with `base`.
pub(crate) fn derive(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}
