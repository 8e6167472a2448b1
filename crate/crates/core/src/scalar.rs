//! Scalar abstractions.
//!
//! Continuous samplers and diagnostics are written against [`Real`] (`f32` or
//! `f64`). Finite-state kernels, drift and minorization checks are written
//! against [`Exact`], which is additionally implemented for big rationals so
//! that those checks can run without round-off.

use std::fmt::Debug;

use nalgebra::RealField;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Floating point scalar used by the continuous-state code paths.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Converts a literal. Panics only for values not representable at all.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn is_nan(self) -> bool {
        self.as_f64().is_nan()
    }

    #[inline]
    fn neg_infinity() -> Self {
        Self::of(f64::NEG_INFINITY)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used for probabilities on finite state spaces.
pub trait Exact: Clone + PartialOrd + Num + Signed + Debug + Send + Sync + 'static {
    /// `num / den`. `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64_lossy(&self) -> f64;

    /// Nearest representable value; exact for rationals built from finite floats.
    fn from_f64_lossy(x: f64) -> Self;

    /// True when arithmetic on this type carries no rounding error.
    fn is_exact() -> bool {
        false
    }

    fn min_of(a: &Self, b: &Self) -> Self {
        if b < a {
            b.clone()
        } else {
            a.clone()
        }
    }
}

impl Exact for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
}

impl Exact for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }
    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
}

impl Exact for BigRational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64_lossy(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_f64_lossy(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(BigInt::from(0)))
    }
    fn is_exact() -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(f64::of(0.44), 0.44);
        assert_eq!(f32::of(0.5), 0.5f32);
        assert!(f64::neg_infinity().is_infinite());
    }

    #[test]
    fn rational_from_ratio_is_exact() {
        let tenth = BigRational::from_ratio(1, 10);
        let sum = (0..10).fold(BigRational::from_ratio(0, 1), |acc, _| acc + tenth.clone());
        assert_eq!(sum, BigRational::from_ratio(1, 1));
        assert!(BigRational::is_exact());
        assert!(!f64::is_exact());
    }
}
