//! Floating-point helpers for `no_std` builds.
//!
//! `core` has no transcendental functions, so everything routes through
//! [`libm`]. Using libm unconditionally (rather than `std` intrinsics when
//! available) also keeps results bit-identical across platforms, which the
//! rest of the crate relies on for reproducible runs.

/// ln(2*pi), used by Gaussian log-densities and entropies.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Transcendental functions on `f64`, backed by libm.
pub trait FloatExt {
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn sqrt(self) -> f64;
    fn tanh(self) -> f64;
    fn sin(self) -> f64;
    fn cos(self) -> f64;
    fn floor(self) -> f64;
    fn round(self) -> f64;
    fn hypot(self, other: f64) -> f64;
    fn powi(self, n: i32) -> f64;
    /// Numerically stable ln(1 + exp(x)).
    fn softplus(self) -> f64;
    /// Logistic function 1 / (1 + exp(-x)).
    fn sigmoid(self) -> f64;
}

impl FloatExt for f64 {
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        libm::tanh(self)
    }
    #[inline]
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    #[inline]
    fn floor(self) -> f64 {
        libm::floor(self)
    }
    #[inline]
    fn round(self) -> f64 {
        libm::round(self)
    }
    #[inline]
    fn hypot(self, other: f64) -> f64 {
        libm::hypot(self, other)
    }
    #[inline]
    fn powi(self, n: i32) -> f64 {
        libm::pow(self, n as f64)
    }
    #[inline]
    fn softplus(self) -> f64 {
        // For large x, ln(1 + e^x) = x + ln(1 + e^-x); the max keeps the
        // exponent non-positive so exp never overflows.
        let m = if self > 0.0 { self } else { 0.0 };
        m + libm::log1p(libm::exp(-libm::fabs(self)))
    }
    #[inline]
    fn sigmoid(self) -> f64 {
        if self >= 0.0 {
            1.0 / (1.0 + libm::exp(-self))
        } else {
            let e = libm::exp(self);
            e / (1.0 + e)
        }
    }
}

/// log(sum(exp(xs))) without overflow; returns -inf for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if !m.is_finite() {
        return m;
    }
    let mut s = 0.0;
    for &x in xs {
        s += libm::exp(x - m);
    }
    m + libm::log(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for i in -40..=40 {
            let x = i as f64 * 0.5;
            let naive = libm::log(1.0 + libm::exp(x));
            assert!((x.softplus() - naive).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!((800.0_f64.softplus() - 800.0).abs() < 1e-9);
        assert!((-800.0_f64).softplus().abs() < 1e-300);
        assert!((-800.0_f64).softplus() >= 0.0);
    }

    #[test]
    fn sigmoid_symmetric_and_bounded() {
        for i in -60..=60 {
            let x = i as f64 * 0.7;
            let s = x.sigmoid();
            assert!(s > 0.0 && s < 1.0 || (s == 0.0 && x < -700.0) || (s == 1.0 && x > 36.0));
            assert!((s + (-x).sigmoid() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [0.3, -1.2, 2.5, 0.0];
        let direct: f64 = xs.iter().map(|&x| libm::exp(x)).sum::<f64>();
        assert!((logsumexp(&xs) - libm::log(direct)).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_handles_large_magnitudes() {
        let xs = [-1000.0, -1000.5];
        let got = logsumexp(&xs);
        let expected = -1000.0 + libm::log(1.0 + libm::exp(-0.5));
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }
}
