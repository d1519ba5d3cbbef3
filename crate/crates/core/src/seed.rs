//! Deterministic seed derivation.
//!
//! Every randomized step derives its own stream from a base seed plus a
//! structural key, so results do not depend on evaluation order or on how
//! work is scheduled across threads.

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `parts` into `base`, order-sensitively.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}
