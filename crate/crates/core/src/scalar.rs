//! Scalar abstractions shared by the grid engine and the growth-function code.
//!
//! [`Scalar`] is what a step function can hold (ring operations, ordering,
//! a lossy view as `f64`). [`Real`] adds exact division and powers of two,
//! which the normalised transforms and piecewise-linear functions need.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::{ExpFloat, Rational};

pub trait Scalar:
    Copy
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn from_i64(v: i64) -> Self;
    fn abs_val(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
    /// Lossy conversion; may return `±inf` for values beyond `f64`.
    fn to_f64(self) -> f64;
    /// Whether arithmetic in this type is exact.
    fn is_exact() -> bool;
    /// Sign in `{-1, 0, 1}`.
    fn signum_i64(self) -> i64 {
        if self > Self::zero() {
            1
        } else if self < Self::zero() {
            -1
        } else {
            0
        }
    }
}

pub trait Real: Scalar + Div<Output = Self> {
    /// `2^e`, or `None` when not representable.
    fn pow2(e: i64) -> Option<Self>;
    /// Conversion from `f64`; exact types require the value to be representable.
    fn from_f64(v: f64) -> Option<Self>;
    /// `log2` of the magnitude as a float; usable far beyond `f64` range
    /// for exponent-coded types.
    fn log2_f64(self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }
}

macro_rules! int_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_i64(v: i64) -> Self { v as $t }
            fn to_f64(self) -> f64 { self as f64 }
            fn is_exact() -> bool { true }
        }
    )*};
}
int_scalar!(i32, i64, i128);

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_i64(v: i64) -> Self { v as $t }
            fn to_f64(self) -> f64 { self as f64 }
            fn is_exact() -> bool { false }
        }
        impl Real for $t {
            fn pow2(e: i64) -> Option<Self> {
                let v = (2.0 as $t).powi(e.clamp(i32::MIN as i64, i32::MAX as i64) as i32);
                (v.is_finite() && v != 0.0).then_some(v)
            }
            fn from_f64(v: f64) -> Option<Self> { v.is_finite().then_some(v as $t) }
            fn log2_f64(self) -> f64 { (self as f64).abs().log2() }
        }
    )*};
}
float_scalar!(f32, f64);

impl Scalar for Rational {
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(v as i128)
    }
    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn is_exact() -> bool {
        true
    }
}

impl Real for Rational {
    fn pow2(e: i64) -> Option<Self> {
        if e.unsigned_abs() > 126 {
            return None;
        }
        let p = 1i128 << e.unsigned_abs();
        Some(if e >= 0 {
            Rational::from_integer(p)
        } else {
            Rational::new_raw(1, p)
        })
    }
    fn from_f64(v: f64) -> Option<Self> {
        dyadic_parts(v).and_then(|(m, e)| {
            let m = Rational::from_integer(m as i128);
            Rational::pow2(e).map(|p| m * p)
        })
    }
    fn log2_f64(self) -> f64 {
        self.to_f64().abs().log2()
    }
}

impl Scalar for ExpFloat {
    fn from_i64(v: i64) -> Self {
        ExpFloat::from_f64(v as f64)
    }
    fn abs_val(self) -> Self {
        self.abs()
    }
    fn to_f64(self) -> f64 {
        ExpFloat::to_f64(self)
    }
    fn is_exact() -> bool {
        false
    }
}

impl Real for ExpFloat {
    fn pow2(e: i64) -> Option<Self> {
        Some(ExpFloat::pow2(e))
    }
    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then(|| ExpFloat::from_f64(v))
    }
    fn log2_f64(self) -> f64 {
        self.log2()
    }
}

/// Splits a finite float into `m * 2^e` with integer `m`.
pub(crate) fn dyadic_parts(v: f64) -> Option<(i64, i64)> {
    if !v.is_finite() {
        return None;
    }
    if v == 0.0 {
        return Some((0, 0));
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (mut m, mut e) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1 << 52), exp_bits - 1075)
    };
    while m % 2 == 0 {
        m /= 2;
        e += 1;
    }
    Some((sign * m, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_pow2_and_float_import() {
        assert_eq!(Rational::pow2(-3), Some(Rational::new(1, 8)));
        assert_eq!(Rational::pow2(127), None);
        assert_eq!(Rational::from_f64(0.375), Some(Rational::new(3, 8)));
        assert_eq!(Rational::from_f64(f64::NAN), None);
    }

    #[test]
    fn signum_and_abs() {
        assert_eq!((-3i64).signum_i64(), -1);
        assert_eq!(0i64.signum_i64(), 0);
        assert_eq!(Scalar::abs_val(Rational::new(-1, 2)), Rational::new(1, 2));
    }
}
