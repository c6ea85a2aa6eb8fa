//! Field abstraction shared by the kernels and the iteration engines.
//!
//! Everything numeric is generic over [`Scalar`] so the same recurrences can
//! be evaluated in binary64 (the production path, where fault injection and
//! rounding-error bounds live) and in exact rational arithmetic (used to check
//! that the CG variants are algebraically equivalent).

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, Signed};

pub trait Scalar: Copy + Debug + PartialEq + PartialOrd + Num + Signed + Send + Sync + 'static {
    /// `false` for infinities and NaN. Exact types are always finite.
    fn is_finite_value(&self) -> bool;

    fn from_f64(v: f64) -> Option<Self>;

    /// Bitwise identity for floats (so NaN equals itself), plain equality otherwise.
    fn bit_eq(&self, other: &Self) -> bool;

    /// Nearest binary64 value, used for reporting only.
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    #[inline]
    fn from_f64(v: f64) -> Option<Self> {
        Some(v)
    }

    #[inline]
    fn bit_eq(&self, other: &Self) -> bool {
        self.to_bits() == other.to_bits()
    }

    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Exact rationals with 128-bit numerator and denominator. Arithmetic panics
/// on overflow in debug builds, which is the desired failure for the small
/// integer systems this type is meant for.
pub type Rational = Ratio<i128>;

impl Scalar for Rational {
    fn is_finite_value(&self) -> bool {
        true
    }

    fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        // Only integers and dyadic fractions small enough to fit are accepted.
        let mut num = v;
        let mut den: i128 = 1;
        while num.fract() != 0.0 {
            num *= 2.0;
            den = den.checked_mul(2)?;
        }
        if num.abs() >= i128::MAX as f64 {
            return None;
        }
        Some(Ratio::new(num as i128, den))
    }

    fn bit_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_from_f64_is_exact_for_dyadics() {
        assert_eq!(Rational::from_f64(0.375), Some(Ratio::new(3, 8)));
        assert_eq!(Rational::from_f64(-4.0), Some(Ratio::from_integer(-4)));
        assert_eq!(Rational::from_f64(f64::NAN), None);
    }
}
