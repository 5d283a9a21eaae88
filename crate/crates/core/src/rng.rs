//! Deterministic random numbers.
//!
//! All randomness in the crate flows through [`ChaCha8Rng`] seeded from a
//! `u64`, with [`child_seed`] deriving independent streams for sub-tasks
//! (per-scene noise, per-epoch shuffles, ...). Floating-point draws are
//! built directly from the integer output so that sequences are reproducible
//! bit-for-bit across platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

// In test builds std's inherent f64 methods shadow this trait; the import is
// still required for the no_std build.
#[cfg_attr(test, allow(unused_imports))]
use crate::fp::FloatExt;

/// Construct the crate's standard generator from a bare seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed for an independent stream.
///
/// This is the splitmix64 finalizer applied to `seed ^ stream`; distinct
/// streams give well-separated seeds even when the inputs are small
/// consecutive integers.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Convenience draws on top of any [`RngCore`].
pub trait RngExt: RngCore {
    /// Uniform draw in [0, 1) with 53 bits of precision.
    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw via Box-Muller.
    ///
    /// Each call consumes exactly two `u64`s; the second Box-Muller output is
    /// discarded so the stream position does not depend on call parity.
    fn normal(&mut self) -> f64 {
        // Reject u1 == 0 so the log argument is strictly positive.
        let mut u1 = self.uniform();
        while u1 <= 0.0 {
            u1 = self.uniform();
        }
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in [0, n). `n` must be positive.
    fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; slight bias is irrelevant at our ranges
        // and the single-draw form keeps stream consumption predictable.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

impl<R: RngCore + ?Sized> RngExt for R {}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded(42);
        let mut b = seeded(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = seeded(1);
        let mut b = seeded(2);
        let same = (0..16).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn child_seeds_are_distinct() {
        let mut seen = Vec::new();
        for stream in 0..64 {
            let s = child_seed(7, stream);
            assert!(!seen.contains(&s));
            seen.push(s);
        }
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = seeded(3);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = seeded(9);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let x = rng.normal();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 3-sigma bands for the Monte-Carlo error of each moment.
        assert!(mean.abs() < 3.0 / (n as f64).sqrt() * 1.0 + 1e-3, "mean = {mean}");
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn below_covers_range_uniformly() {
        let mut rng = seeded(5);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[rng.below(7)] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "counts = {counts:?}");
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = seeded(11);
        let mut xs: Vec<usize> = (0..50).collect();
        shuffle(&mut xs, &mut rng);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, (0..50).collect::<Vec<_>>());
    }
}
