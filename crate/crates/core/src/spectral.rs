//! Natural numbers stored by their spectrum (the set of 1-bit positions).
//!
//! The spectrum is kept as maximal runs of consecutive exponents, so both
//! the magnitude and the run length are limited only by `u64` exponents.
//! Everything downstream needs only the spectrum: the variation is twice the
//! number of runs, dyadic addition is the symmetric difference, and the few
//! additions/subtractions required are carried out run by run.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A natural number as a sorted set of binary exponents.
///
/// Internally the spectrum is stored as half-open runs `[start, end)` with
/// `end_i < start_{i+1}` (runs never touch), which makes the representation
/// unique.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "RunList", into = "RunList")]
pub struct SpectralNat {
    runs: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct RunList {
    runs: Vec<(u64, u64)>,
}

impl From<SpectralNat> for RunList {
    fn from(n: SpectralNat) -> Self {
        RunList { runs: n.runs }
    }
}

impl TryFrom<RunList> for SpectralNat {
    type Error = String;
    fn try_from(r: RunList) -> std::result::Result<Self, String> {
        for (i, &(s, e)) in r.runs.iter().enumerate() {
            if s >= e {
                return Err(format!("empty run at {i}"));
            }
            if i > 0 && r.runs[i - 1].1 >= s {
                return Err(format!("runs {} and {i} touch or overlap", i - 1));
            }
        }
        Ok(SpectralNat { runs: r.runs })
    }
}

struct RunBuilder {
    runs: Vec<(u64, u64)>,
}

impl RunBuilder {
    fn new() -> Self {
        RunBuilder { runs: Vec::new() }
    }

    /// Appends `len` copies of `bit` starting at exponent `start`; calls must
    /// arrive in increasing, contiguous order of `start` for set bits.
    fn push(&mut self, start: u64, len: u64, bit: bool) {
        if !bit || len == 0 {
            return;
        }
        let end = start + len;
        match self.runs.last_mut() {
            Some(last) if last.1 == start => last.1 = end,
            _ => self.runs.push((start, end)),
        }
    }

    fn finish(self) -> SpectralNat {
        SpectralNat { runs: self.runs }
    }
}

impl SpectralNat {
    pub fn zero() -> Self {
        SpectralNat { runs: Vec::new() }
    }

    /// `2^e`.
    pub fn pow2(e: u64) -> Self {
        SpectralNat {
            runs: vec![(e, e + 1)],
        }
    }

    /// `2^end - 2^start`, i.e. the single run of exponents `start..end`.
    pub fn run(start: u64, end: u64) -> Self {
        if start >= end {
            Self::zero()
        } else {
            SpectralNat {
                runs: vec![(start, end)],
            }
        }
    }

    /// Builds from an arbitrary collection of exponents (duplicates ignored).
    pub fn from_bits<I: IntoIterator<Item = u64>>(bits: I) -> Self {
        let mut v: Vec<u64> = bits.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        let mut b = RunBuilder::new();
        for e in v {
            b.push(e, 1, true);
        }
        b.finish()
    }

    pub fn from_u128(mut v: u128) -> Self {
        let mut b = RunBuilder::new();
        let mut pos = 0u64;
        while v != 0 {
            let tz = v.trailing_zeros() as u64;
            v >>= tz;
            pos += tz;
            let ones = (!v).trailing_zeros() as u64;
            b.push(pos, ones, true);
            v = if ones >= 128 { 0 } else { v >> ones };
            pos += ones;
        }
        b.finish()
    }

    pub fn from_u64(v: u64) -> Self {
        Self::from_u128(v as u128)
    }

    pub fn from_biguint(v: &BigUint) -> Self {
        let mut b = RunBuilder::new();
        for e in 0..v.bits() {
            b.push(e, 1, v.bit(e));
        }
        b.finish()
    }

    /// Exact magnitude when it fits in `u128`.
    pub fn to_u128(&self) -> Option<u128> {
        match self.max_exp() {
            None => Some(0),
            Some(m) if m < 128 => Some(self.bits().fold(0u128, |acc, e| acc | (1u128 << e))),
            _ => None,
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.to_u128().and_then(|v| u64::try_from(v).ok())
    }

    /// Exact magnitude as a big integer when it has at most `max_bits` bits.
    pub fn to_biguint(&self, max_bits: u64) -> Option<BigUint> {
        let top = match self.max_exp() {
            None => return Some(BigUint::default()),
            Some(m) => m,
        };
        if top >= max_bits {
            return None;
        }
        let mut v = BigUint::default();
        for e in self.bits() {
            v.set_bit(e, true);
        }
        Some(v)
    }

    /// Approximate `log2`, valid for any magnitude; `-inf` for zero.
    pub fn log2_approx(&self) -> f64 {
        let Some(top) = self.max_exp() else {
            return f64::NEG_INFINITY;
        };
        // The top 60 bits determine the mantissa to double precision.
        let lo = top.saturating_sub(60);
        let mut m = 0f64;
        for e in self.bits_in(lo, top + 1) {
            m += 2f64.powi((e as i64 - top as i64) as i32);
        }
        top as f64 + m.log2()
    }

    pub fn is_zero(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn runs(&self) -> &[(u64, u64)] {
        &self.runs
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// Number of set bits.
    pub fn popcount(&self) -> u128 {
        self.runs.iter().map(|&(s, e)| (e - s) as u128).sum()
    }

    /// Iterates the spectrum in increasing order.
    pub fn bits(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().flat_map(|&(s, e)| s..e)
    }

    /// Iterates spectrum elements inside `[lo, hi)`.
    pub fn bits_in(&self, lo: u64, hi: u64) -> impl Iterator<Item = u64> + '_ {
        self.runs
            .iter()
            .filter(move |&&(s, e)| e > lo && s < hi)
            .flat_map(move |&(s, e)| s.max(lo)..e.min(hi))
    }

    pub fn contains(&self, e: u64) -> bool {
        let idx = self.runs.partition_point(|&(_, end)| end <= e);
        idx < self.runs.len() && self.runs[idx].0 <= e
    }

    /// `max Sp(n)`; `None` for zero.
    pub fn max_exp(&self) -> Option<u64> {
        self.runs.last().map(|&(_, e)| e - 1)
    }

    /// `min Sp(n)`; `None` for zero.
    pub fn min_exp(&self) -> Option<u64> {
        self.runs.first().map(|&(s, _)| s)
    }

    /// Variation `ε_0 + Σ |ε_j - ε_{j-1}|`: every run contributes one rising
    /// and one falling edge.
    pub fn variation(&self) -> u64 {
        2 * self.runs.len() as u64
    }

    /// Dyadic sum (bitwise XOR).
    pub fn xor(&self, other: &Self) -> Self {
        let mut edges: Vec<u64> = Vec::with_capacity(2 * (self.runs.len() + other.runs.len()));
        let a = self.runs.iter().flat_map(|&(s, e)| [s, e]);
        let b = other.runs.iter().flat_map(|&(s, e)| [s, e]);
        let mut a = a.peekable();
        let mut b = b.peekable();
        loop {
            match (a.peek().copied(), b.peek().copied()) {
                (Some(x), Some(y)) if x == y => {
                    a.next();
                    b.next();
                }
                (Some(x), Some(y)) if x < y => {
                    edges.push(x);
                    a.next();
                }
                (Some(_), Some(y)) => {
                    edges.push(y);
                    b.next();
                }
                (Some(x), None) => {
                    edges.push(x);
                    a.next();
                }
                (None, Some(y)) => {
                    edges.push(y);
                    b.next();
                }
                (None, None) => break,
            }
        }
        let runs = edges.chunks(2).map(|c| (c[0], c[1])).collect();
        SpectralNat { runs }
    }

    /// Runs a bit-serial operation segment by segment. `step(a, b, carry)`
    /// returns `(bit, carry')`; on a segment where both operand bits are
    /// constant the carry reaches a fixed point after one step.
    fn sweep(&self, other: &Self, step: impl Fn(bool, bool, bool) -> (bool, bool)) -> (Self, bool) {
        let mut points: Vec<u64> = self
            .runs
            .iter()
            .chain(other.runs.iter())
            .flat_map(|&(s, e)| [s, e])
            .collect();
        points.push(0);
        points.sort_unstable();
        points.dedup();
        let mut out = RunBuilder::new();
        let mut carry = false;
        for w in points.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (ab, bb) = (self.contains(lo), other.contains(lo));
            let (first, c1) = step(ab, bb, carry);
            out.push(lo, 1, first);
            let (rest, c2) = step(ab, bb, c1);
            out.push(lo + 1, hi - lo - 1, rest);
            carry = if hi - lo > 1 { c2 } else { c1 };
        }
        // above every breakpoint both operands are zero
        let top = *points.last().unwrap();
        let (bit, c) = step(false, false, carry);
        out.push(top, 1, bit);
        let overflow = if bit { step(false, false, c).1 } else { c };
        (out.finish(), overflow)
    }

    /// Exact sum.
    pub fn add(&self, other: &Self) -> Self {
        let (sum, _) = self.sweep(other, |a, b, c| {
            let s = a as u8 + b as u8 + c as u8;
            (s & 1 == 1, s >= 2)
        });
        sum
    }

    /// Exact difference; `Err(Underflow)` when `other > self`.
    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        if self < other {
            return Err(Error::Underflow);
        }
        let (diff, _) = self.sweep(other, |a, b, br| {
            let d = a as i8 - b as i8 - br as i8;
            (d & 1 == 1, d < 0)
        });
        Ok(diff)
    }

    /// `|self - other|`.
    pub fn abs_diff(&self, other: &Self) -> Self {
        if self >= other {
            self.checked_sub(other).expect("ordered")
        } else {
            other.checked_sub(self).expect("ordered")
        }
    }

    /// `self · 2^k`.
    pub fn shl(&self, k: u64) -> Self {
        SpectralNat {
            runs: self.runs.iter().map(|&(s, e)| (s + k, e + k)).collect(),
        }
    }

    /// `Sp(self) ⊆ Sp(other)`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.runs.iter().all(|&(s, e)| {
            let idx = other.runs.partition_point(|&(_, end)| end <= s);
            idx < other.runs.len() && other.runs[idx].0 <= s && other.runs[idx].1 >= e
        })
    }

    /// Spectrum restricted to exponents `< bound`.
    pub fn truncate_below(&self, bound: u64) -> Self {
        let mut b = RunBuilder::new();
        for &(s, e) in &self.runs {
            if s < bound {
                b.push(s, e.min(bound) - s, true);
            }
        }
        b.finish()
    }

    /// Subtraction valid when `Sp(other) ⊆ Sp(self)`; then `a - b = a ⊕ b`.
    pub fn nested_diff(&self, other: &Self) -> Result<Self> {
        if !other.is_subset_of(self) {
            return Err(Error::NotNested);
        }
        Ok(self.xor(other))
    }
}

/// Dyadic sum, free-function spelling.
pub fn xor(a: &SpectralNat, b: &SpectralNat) -> SpectralNat {
    a.xor(b)
}

/// Nested subtraction, free-function spelling.
pub fn nested_diff(a: &SpectralNat, b: &SpectralNat) -> Result<SpectralNat> {
    a.nested_diff(b)
}

/// `V(n)`, free-function spelling.
pub fn variation(n: &SpectralNat) -> u64 {
    n.variation()
}

impl Ord for SpectralNat {
    /// Scans runs from the top; with maximal runs the first difference
    /// decides (a higher end, or a lower start under the same end, means a
    /// set bit where the other number has a gap).
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.runs.iter().rev().zip(other.runs.iter().rev()) {
            if a.1 != b.1 {
                return a.1.cmp(&b.1);
            }
            if a.0 != b.0 {
                return b.0.cmp(&a.0);
            }
        }
        self.runs.len().cmp(&other.runs.len())
    }
}

impl PartialOrd for SpectralNat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::str::FromStr for SpectralNat {
    type Err = Error;
    /// Decimal digits.
    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<BigUint>()
            .map(|v| Self::from_biguint(&v))
            .map_err(|_| Error::InvalidInput(format!("`{s}` is not a natural number")))
    }
}

impl From<u64> for SpectralNat {
    fn from(v: u64) -> Self {
        Self::from_u64(v)
    }
}

impl fmt::Display for SpectralNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(v) = self.to_u128() {
            write!(f, "{v}")
        } else if let Some(v) = self.to_biguint(4096) {
            write!(f, "{v}")
        } else {
            write!(
                f,
                "<2^{} with {} runs>",
                self.max_exp().unwrap_or(0),
                self.runs.len()
            )
        }
    }
}

impl fmt::Debug for SpectralNat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralNat({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(v: u64) -> SpectralNat {
        SpectralNat::from_u64(v)
    }

    #[test]
    fn variation_examples() {
        assert_eq!(n(0).variation(), 0);
        assert_eq!(n(5).variation(), 4);
        assert_eq!(n(21).variation(), 6);
        assert_eq!(n(85).variation(), 8);
    }

    #[test]
    fn variation_matches_definition_on_small_range() {
        for v in 0u64..4096 {
            let mut def = v & 1;
            for j in 1..14 {
                def += ((v >> j) & 1) ^ ((v >> (j - 1)) & 1);
            }
            assert_eq!(n(v).variation(), def, "n = {v}");
        }
    }

    #[test]
    fn powers_and_mersenne() {
        for k in 0..=60u64 {
            assert_eq!(SpectralNat::pow2(k).variation(), 2);
            if k >= 1 {
                assert_eq!(n((1u64 << k) - 1).variation(), 2);
            }
        }
    }

    #[test]
    fn xor_examples() {
        assert_eq!(n(5).xor(&n(16)), n(21));
        assert_eq!(n(21).xor(&n(5)), n(16));
        assert!(n(77).xor(&n(77)).is_zero());
    }

    #[test]
    fn nested_diff_examples() {
        assert_eq!(n(21).nested_diff(&n(5)), Ok(n(16)));
        assert_eq!(n(85).nested_diff(&n(21)), Ok(n(64)));
        assert!(n(85).nested_diff(&n(85)).unwrap().is_zero());
        assert_eq!(n(21).nested_diff(&n(2)), Err(Error::NotNested));
    }

    #[test]
    fn add_sub_with_long_carries() {
        let a = SpectralNat::run(0, 1_000_000_000_000);
        let one = n(1);
        let s = a.add(&one);
        assert_eq!(s, SpectralNat::pow2(1_000_000_000_000));
        assert_eq!(s.checked_sub(&one).unwrap(), a);
        assert_eq!(one.checked_sub(&s), Err(Error::Underflow));
    }

    #[test]
    fn order_and_display() {
        assert!(n(21) > n(5));
        assert!(SpectralNat::pow2(200) > n(u64::MAX));
        assert_eq!(n(339).to_string(), "339");
        assert_eq!(SpectralNat::pow2(70).to_u128(), Some(1u128 << 70));
    }

    #[test]
    fn serde_runs() {
        let v = n(0b1110_0101);
        let js = serde_json::to_string(&v).unwrap();
        let back: SpectralNat = serde_json::from_str(&js).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<SpectralNat>("{\"runs\":[[3,3]]}").is_err());
    }

    #[test]
    fn log2_approx_huge() {
        let v = SpectralNat::pow2(1 << 50).add(&SpectralNat::pow2((1 << 50) - 1));
        let expected = (1u64 << 50) as f64 + 1.5f64.log2();
        assert!((v.log2_approx() - expected).abs() < 1e-3);
    }
}
