//! Floating point with a 64-bit binary exponent.
//!
//! Growth-function knots sit at `2^(2 n)` for sequence terms `n` that are
//! already in the thousands at the third term, so `f64` overflows almost
//! immediately. `ExpFloat` keeps an `f64` mantissa in `[1, 2)` and an `i64`
//! exponent; powers of two and scaling by powers of two are exact.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFloat {
    /// Zero, or magnitude in `[1, 2)` carrying the sign.
    mant: f64,
    exp: i64,
}

impl ExpFloat {
    pub const ZERO: ExpFloat = ExpFloat { mant: 0.0, exp: 0 };

    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "ExpFloat::from_f64 on non-finite value");
        Self::normalize(v, 0)
    }

    /// Exact power of two.
    pub fn pow2(e: i64) -> Self {
        ExpFloat { mant: 1.0, exp: e }
    }

    pub fn mantissa(self) -> f64 {
        self.mant
    }

    pub fn exponent(self) -> i64 {
        self.exp
    }

    fn normalize(m: f64, e: i64) -> Self {
        if m == 0.0 {
            return Self::ZERO;
        }
        let bits = m.to_bits();
        let exp_bits = ((bits >> 52) & 0x7ff) as i64;
        if exp_bits == 0 {
            // subnormal mantissa: lift into the normal range first
            return Self::normalize(m * 2f64.powi(64), e - 64);
        }
        let shift = exp_bits - 1023;
        let mant = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
        ExpFloat {
            mant,
            exp: e.saturating_add(shift),
        }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }

    pub fn abs(self) -> Self {
        ExpFloat {
            mant: self.mant.abs(),
            exp: self.exp,
        }
    }

    /// Multiplies by `2^k` exactly.
    pub fn scale_pow2(self, k: i64) -> Self {
        if self.is_zero() {
            self
        } else {
            ExpFloat {
                mant: self.mant,
                exp: self.exp + k,
            }
        }
    }

    /// Lossy view; saturates to `±inf` / `0`.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.exp > 1023 {
            return self.mant.signum() * f64::INFINITY;
        }
        if self.exp < -1074 {
            return 0.0;
        }
        let half = self.exp / 2;
        self.mant * 2f64.powi(half as i32) * 2f64.powi((self.exp - half) as i32)
    }

    /// `log2 |x|`; `-inf` for zero.
    pub fn log2(self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.exp as f64 + self.mant.abs().log2()
        }
    }
}

impl fmt::Debug for ExpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ExpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp.abs() < 60 {
            write!(f, "{}", self.to_f64())
        } else {
            write!(f, "{}*2^{}", self.mant, self.exp)
        }
    }
}

impl PartialOrd for ExpFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let sa = self.mant.signum_or_zero();
        let sb = other.mant.signum_or_zero();
        if sa != sb {
            return sa.partial_cmp(&sb);
        }
        if sa == 0.0 {
            return Some(Ordering::Equal);
        }
        let mag = self
            .exp
            .cmp(&other.exp)
            .then(self.mant.abs().partial_cmp(&other.mant.abs())?);
        Some(if sa > 0.0 { mag } else { mag.reverse() })
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self == 0.0 {
            0.0
        } else {
            self.signum()
        }
    }
}

impl Add for ExpFloat {
    type Output = ExpFloat;
    fn add(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp >= rhs.exp {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let d = big.exp - small.exp;
        if d > 1100 {
            return big;
        }
        let half = d / 2;
        let aligned = small.mant * 2f64.powi(-(half as i32)) * 2f64.powi(-((d - half) as i32));
        Self::normalize(big.mant + aligned, big.exp)
    }
}

impl Sub for ExpFloat {
    type Output = ExpFloat;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for ExpFloat {
    type Output = ExpFloat;
    fn neg(self) -> Self {
        ExpFloat {
            mant: -self.mant,
            exp: self.exp,
        }
    }
}

impl Mul for ExpFloat {
    type Output = ExpFloat;
    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        Self::normalize(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl Div for ExpFloat {
    type Output = ExpFloat;
    fn div(self, rhs: Self) -> Self {
        assert!(!rhs.is_zero(), "ExpFloat division by zero");
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::normalize(self.mant / rhs.mant, self.exp - rhs.exp)
    }
}

impl Zero for ExpFloat {
    fn zero() -> Self {
        Self::ZERO
    }
    fn is_zero(&self) -> bool {
        self.mant == 0.0
    }
}

impl One for ExpFloat {
    fn one() -> Self {
        Self::pow2(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_ordering() {
        for v in [0.0, 1.0, -3.5, 1e-300, 6.02e23, -7.0e-5] {
            assert_eq!(ExpFloat::from_f64(v).to_f64(), v);
        }
        let huge = ExpFloat::pow2(1 << 40);
        let bigger = huge * ExpFloat::from_f64(3.0);
        assert!(bigger > huge);
        assert!(-bigger < -huge);
        assert!(ExpFloat::ZERO < huge);
        assert_eq!((bigger / huge).to_f64(), 3.0);
        assert_eq!(huge.log2(), (1u64 << 40) as f64);
    }

    #[test]
    fn addition_aligns_exponents() {
        let a = ExpFloat::pow2(10) * ExpFloat::from_f64(4.0);
        let b = ExpFloat::from_f64(6.0) * ExpFloat::pow2(10);
        assert_eq!((a + b).to_f64(), 10240.0);
        let tiny = ExpFloat::pow2(-5000);
        assert_eq!(a + tiny, a);
        assert_eq!((a - a).to_f64(), 0.0);
    }
}
