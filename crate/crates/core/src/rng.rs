//! Seeded randomness with a portable definition.
//!
//! The generator is SplitMix64 (state += 0x9E3779B97F4A7C15, then the
//! Stafford variant-13 mixer with multipliers 0xBF58476D1CE4E5B9 and
//! 0x94D049BB133111EB), seeded by using the seed as the initial state.
//! Bounded integers use rejection of the low `2^64 mod n` outputs followed by
//! `x mod n`, and subsets use a partial Fisher–Yates shuffle, so a seed picks
//! the same subset in any implementation that follows these three rules.

use rand::{RngCore, SeedableRng};
pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Uniform integer in `0..n`.
pub fn below<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "empty range");
    let threshold = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return x % n;
        }
    }
}

/// `k` distinct indices from `0..n`, in selection order.
pub fn sample_indices<R: RngCore>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot pick {k} of {n}");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix64_reference_stream() {
        // first outputs for state 0, as published with the algorithm
        let mut r = seeded(0);
        assert_eq!(r.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(r.next_u64(), 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(r.next_u64(), 0x06c4_5d18_8009_454f);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = seeded(3);
        for n in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..100 {
                assert!(below(&mut r, n) < n);
            }
        }
    }

    #[test]
    fn sample_is_distinct_subset() {
        let mut r = seeded(11);
        let s = sample_indices(&mut r, 50, 20);
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        assert!(sorted.iter().all(|&i| i < 50));
        let again = sample_indices(&mut seeded(11), 50, 20);
        assert_eq!(s, again);
    }

    #[test]
    fn full_sample_is_permutation() {
        let mut s = sample_indices(&mut seeded(5), 9, 9);
        s.sort_unstable();
        assert_eq!(s, (0..9).collect::<Vec<_>>());
    }
}
