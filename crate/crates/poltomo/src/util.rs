//! Small shared helpers: factorials and seed derivation.

/// n! as an exact integer. Valid for n <= 33.
pub(crate) fn factorial_u128(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// n! as a float.
pub(crate) fn factorial_f64(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Binomial coefficient C(n, k) as an exact integer.
pub(crate) fn binomial_u128(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// Derives a stream seed from a base seed and a stream index (splitmix64 step).
pub(crate) fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
