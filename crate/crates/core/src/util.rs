//! Small numeric helpers shared across modules.

/// Dot product of two equal-length slices.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Euclidean norm.
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One step of the splitmix64 sequence; also used as a 64-bit finalizer.
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ceiling of log2(x) for x >= 1, as an exact integer computation.
pub(crate) fn ceil_log2_u128(x: u128) -> u32 {
    assert!(x >= 1);
    let bits = 128 - x.leading_zeros();
    if x.is_power_of_two() {
        bits - 1
    } else {
        bits
    }
}
