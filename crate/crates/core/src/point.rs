//! Points of `[0, 1)` with finite binary expansions.
//!
//! Bit `b_i` (i ≥ 1, most significant first) is stored at position `i - 1`
//! of a little-endian word vector. That aligns digit `b_{j+1}`, the one read
//! by the Rademacher function `r_j`, with exponent `j` of a spectral index.

use std::fmt;

use rand::Rng;

use crate::{Error, Result};

#[derive(Clone)]
pub struct DyadicPoint {
    words: Vec<u64>,
    resolution: u32,
}

impl DyadicPoint {
    pub fn zero(resolution: u32) -> Self {
        DyadicPoint {
            words: vec![0; words_for(resolution)],
            resolution,
        }
    }

    /// From digits `(b_1, …, b_R)`.
    pub fn from_digits(digits: &[bool]) -> Self {
        let mut p = Self::zero(digits.len() as u32);
        for (i, &d) in digits.iter().enumerate() {
            if d {
                p.words[i / 64] |= 1 << (i % 64);
            }
        }
        p
    }

    /// Parses a digit string such as `"011"` (meaning `3/8`).
    pub fn parse(s: &str) -> Result<Self> {
        let digits: Result<Vec<bool>> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidInput(format!("bad digit `{c}` in point"))),
            })
            .collect();
        Ok(Self::from_digits(&digits?))
    }

    /// The left endpoint `j / 2^n` of the cell with 0-based index `j`.
    pub fn cell_anchor(j: u64, n: u32) -> Self {
        assert!(n <= 64 && (n == 64 || j < (1u64 << n)), "cell index out of range");
        let digits: Vec<bool> = (0..n).map(|i| (j >> (n - 1 - i)) & 1 == 1).collect();
        Self::from_digits(&digits)
    }

    /// Uniform random point with `resolution` digits.
    pub fn random<R: Rng + ?Sized>(resolution: u32, rng: &mut R) -> Self {
        let mut p = Self::zero(resolution);
        for w in p.words.iter_mut() {
            *w = rng.gen();
        }
        p.mask_tail();
        p
    }

    fn mask_tail(&mut self) {
        let r = self.resolution as usize;
        if !r.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (r % 64)) - 1;
            }
        }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// Digit `b_i`, `i ≥ 1`; zero beyond the resolution.
    pub fn digit(&self, i: u32) -> bool {
        assert!(i >= 1, "digits are numbered from 1");
        let k = (i - 1) as usize;
        k < self.resolution as usize && (self.words[k / 64] >> (k % 64)) & 1 == 1
    }

    /// Digit `b_{e+1}`, the one paired with exponent `e`.
    pub fn digit_for_exponent(&self, e: u64) -> bool {
        e < self.resolution as u64 && (self.words[(e / 64) as usize] >> (e % 64)) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Dyadic sum of two points; resolution is the larger of the two.
    pub fn xor(&self, other: &Self) -> Self {
        let resolution = self.resolution.max(other.resolution);
        let mut words = vec![0; words_for(resolution)];
        for (i, w) in words.iter_mut().enumerate() {
            *w = self.words.get(i).copied().unwrap_or(0) ^ other.words.get(i).copied().unwrap_or(0);
        }
        DyadicPoint { words, resolution }
    }

    /// Number of leading zero digits; `None` when the point is `0`.
    pub fn leading_zeros(&self) -> Option<u32> {
        for (i, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(i as u32 * 64 + w.trailing_zeros());
            }
        }
        None
    }

    /// 0-based index of the cell `Δ(n, ·)` containing the point (`n ≤ 63`).
    pub fn cell_index(&self, n: u32) -> u64 {
        assert!(n <= 63);
        (1..=n).fold(0u64, |acc, i| (acc << 1) | self.digit(i) as u64)
    }

    /// Approximate value.
    pub fn to_f64(&self) -> f64 {
        (1..=self.resolution.min(60))
            .filter(|&i| self.digit(i))
            .map(|i| 2f64.powi(-(i as i32)))
            .sum()
    }

    /// Digits as a `0`/`1` string of length `resolution`.
    pub fn digit_string(&self) -> String {
        (1..=self.resolution)
            .map(|i| if self.digit(i) { '1' } else { '0' })
            .collect()
    }
}

fn words_for(resolution: u32) -> usize {
    (resolution as usize).div_ceil(64).max(1)
}

/// Dyadic sum of points, free-function spelling.
pub fn point_xor(x: &DyadicPoint, y: &DyadicPoint) -> DyadicPoint {
    x.xor(y)
}

impl PartialEq for DyadicPoint {
    fn eq(&self, other: &Self) -> bool {
        let n = self.words.len().max(other.words.len());
        (0..n).all(|i| self.words.get(i).copied().unwrap_or(0) == other.words.get(i).copied().unwrap_or(0))
    }
}

impl Eq for DyadicPoint {}

impl fmt::Debug for DyadicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0.{}b", self.digit_string())
    }
}
