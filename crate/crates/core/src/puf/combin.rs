//! Exact combinatorics for challenge-space accounting and unranking.
//!
//! Subsets are ordered lexicographically; ranks use the combinatorial
//! number system so the map between ranks and subsets is a bijection.

use num_bigint::BigUint;

// Pools up to this size run on u128 arithmetic (C(100, 50) ~ 1e29 and the
// multiply-then-divide intermediates stay far below u128::MAX).
const FAST_POOL: usize = 100;

fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result * (n - (k - i)) as u128 / i as u128;
    }
    result
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if n <= FAST_POOL {
        return BigUint::from(binomial_u128(n, k));
    }
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut result = BigUint::from(1u32);
    for i in 1..=k {
        result = result * BigUint::from(n - (k - i)) / BigUint::from(i);
    }
    result
}

/// The `rank`-th k-subset of `{0, .., n-1}` in lexicographic order.
///
/// Requires `rank < binomial(n, k)`.
pub fn subset_unrank(n: usize, k: usize, rank: &BigUint) -> Vec<usize> {
    debug_assert!(*rank < binomial(n, k));
    if n <= FAST_POOL {
        let mut rank = u128::try_from(rank).expect("rank below C(n, k) fits u128");
        let mut combo = Vec::with_capacity(k);
        let mut next = 0usize;
        for i in 0..k {
            let mut c = next;
            loop {
                let with_c = binomial_u128(n - c - 1, k - i - 1);
                if with_c <= rank {
                    rank -= with_c;
                    c += 1;
                } else {
                    combo.push(c);
                    next = c + 1;
                    break;
                }
            }
        }
        return combo;
    }
    let mut rank = rank.clone();
    let mut combo = Vec::with_capacity(k);
    let mut next = 0usize;
    for i in 0..k {
        let mut c = next;
        loop {
            let with_c = binomial(n - c - 1, k - i - 1);
            if with_c <= rank {
                rank -= with_c;
                c += 1;
            } else {
                combo.push(c);
                next = c + 1;
                break;
            }
        }
    }
    combo
}

/// Lexicographic rank of a strictly increasing k-subset of `{0, .., n-1}`.
pub fn subset_rank(n: usize, indices: &[usize]) -> BigUint {
    let k = indices.len();
    if n <= FAST_POOL {
        let mut rank: u128 = 0;
        for (i, &c) in indices.iter().enumerate() {
            let start = if i == 0 { 0 } else { indices[i - 1] + 1 };
            for j in start..c {
                rank += binomial_u128(n - j - 1, k - i - 1);
            }
        }
        return BigUint::from(rank);
    }
    let mut rank = BigUint::from(0u32);
    for (i, &c) in indices.iter().enumerate() {
        let start = if i == 0 { 0 } else { indices[i - 1] + 1 };
        for j in start..c {
            rank += binomial(n - j - 1, k - i - 1);
        }
    }
    rank
}
