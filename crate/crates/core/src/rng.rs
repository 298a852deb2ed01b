//! Counter-based deterministic random streams.
//!
//! Every random draw in the crate is a pure function of a small tuple of
//! integers (seed, node, state, iteration, ...). This makes model
//! generation and the stochastic engine reproducible independent of
//! execution order: replaying a run with the same seed yields bit-identical
//! results even if edges are processed in parallel.

/// splitmix64 finalizer; a full-period mixer over u64.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes an ordered key tuple into a single u64 stream value.
///
/// Keys are absorbed sequentially so `[a, b]` and `[b, a]` produce
/// unrelated outputs.
#[inline]
pub fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x6c62_272e_07bb_0142u64;
    for &p in parts {
        state = splitmix64(state ^ p);
    }
    splitmix64(state)
}

/// Maps a u64 to a double in the half-open interval [0, 1).
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    // 53 high bits -> [0, 1)
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Maps a u64 to a double in the open interval (0, 1).
#[inline]
pub fn unit_open_f64(x: u64) -> f64 {
    // 52 bits so the +0.5 offset stays representable at the top end.
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// A draw from the open interval (-1, 1), keyed by an integer tuple.
#[inline]
pub fn signed_unit(parts: &[u64]) -> f64 {
    2.0 * unit_open_f64(mix(parts)) - 1.0
}
