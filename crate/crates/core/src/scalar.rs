//! Scalar abstraction.
//!
//! Every estimator and identity in this crate only needs field arithmetic, so
//! the core is written against [`Scalar`]. Spectral work (eigenvalues, psd
//! checks, normal sampling) additionally needs [`Real`].
//!
//! Implementations are provided for `f32`, `f64` and [`Exact`], a rational
//! type over `i128`. With `Exact` every identity (unbiasedness, the variance
//! decomposition, ...) can be checked with `==`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, Num, NumAssign, ToPrimitive, Zero};

/// Exact rational scalar. Overflows panic, so keep populations small.
pub type Exact = Ratio<i128>;

pub trait Scalar:
    Copy + Debug + PartialOrd + Num + NumAssign + Neg<Output = Self> + Sum + Send + Sync + 'static
{
    fn from_ratio(r: &BigRational) -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Tolerance `eps` in this scalar type. Exact types collapse every tolerance to zero.
    fn tol(eps: f64) -> Self {
        Self::from_f64(eps)
    }

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }

    fn abs_val(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn max_val(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

/// Floating point scalar: f32 or f64
pub trait Real: Scalar + Float {}

impl Scalar for f64 {
    fn from_ratio(r: &BigRational) -> Self {
        ratio_to_f64(r)
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_ratio(r: &BigRational) -> Self {
        ratio_to_f64(r) as f32
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {}
impl Real for f32 {}

impl Scalar for Exact {
    fn from_ratio(r: &BigRational) -> Self {
        let n = r.numer().to_i128().expect("numerator exceeds i128");
        let d = r.denom().to_i128().expect("denominator exceeds i128");
        Ratio::new(n, d)
    }
    fn from_f64(x: f64) -> Self {
        let r = BigRational::from_float(x).expect("finite value");
        Self::from_ratio(&r)
    }
    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
    fn tol(_eps: f64) -> Self {
        Self::zero()
    }
    fn from_usize(n: usize) -> Self {
        Ratio::from_integer(n as i128)
    }
}

/// Converts a big rational to f64 without overflowing on huge numerators/denominators.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if let Some(x) = ToPrimitive::to_f64(r) {
        if x.is_finite() {
            return x;
        }
    }
    // Shift both parts into range, then divide.
    let n_bits = r.numer().bits() as i64;
    let d_bits = r.denom().bits() as i64;
    let shift_n = (n_bits - 1000).max(0) as usize;
    let shift_d = (d_bits - 1000).max(0) as usize;
    let n: BigInt = r.numer() >> shift_n;
    let d: BigInt = r.denom() >> shift_d;
    let q = n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(1.0);
    q * 2f64.powi((shift_n as i64 - shift_d as i64) as i32)
}

/// Relative residual `|a - b| / scale`, with `scale` floored at `f64::MIN_POSITIVE`.
pub fn rel_residual(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn exact_roundtrip_and_zero_tolerance() {
        let r = BigRational::new(BigInt::from(5), BigInt::from(3));
        let e = Exact::from_ratio(&r);
        assert_eq!(e, Ratio::new(5, 3));
        assert_eq!(Exact::tol(1e-10), Exact::zero());
        assert!((e.to_f64() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn big_ratio_to_f64_does_not_overflow() {
        let big = BigInt::from(10).pow(400);
        let r = BigRational::new(big.clone() * 3, big);
        assert!((ratio_to_f64(&r) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn abs_and_max() {
        assert_eq!((-2.5f64).abs_val(), 2.5);
        assert_eq!(Exact::new(-1, 2).abs_val(), Exact::new(1, 2));
        assert_eq!(1.0f64.max_val(3.0), 3.0);
    }
}
