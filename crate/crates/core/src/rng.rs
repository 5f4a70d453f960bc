//! Counter-based random streams.
//!
//! Every random quantity is a pure function of a seed and a key path, so
//! results do not depend on generation order or thread count.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a key path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed.wrapping_add(GOLDEN)), |h, &k| {
        mix64(h ^ mix64(k.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

/// Uniform draw in `[0, 1)` keyed by `(seed, path)`.
pub fn unit(seed: u64, path: &[u64]) -> f64 {
    (derive(seed, path) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[-1, 1)` keyed by `(seed, path)`.
pub fn signed_unit(seed: u64, path: &[u64]) -> f64 {
    2.0 * unit(seed, path) - 1.0
}

/// Uniform integer in `0..n` keyed by `(seed, path)`. `n` must be nonzero.
pub fn below(seed: u64, path: &[u64], n: u64) -> u64 {
    debug_assert!(n > 0);
    ((derive(seed, path) as u128 * n as u128) >> 64) as u64
}
