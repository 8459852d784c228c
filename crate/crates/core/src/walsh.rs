//! Walsh functions on dyadic grids.
//!
//! Two engines live here. The dense engine works on step functions over the
//! `2^N` cells `Δ(N, j)` and uses the in-place Walsh–Hadamard butterfly; it
//! is exact on integer grids. The pointwise engine evaluates Walsh functions
//! and Dirichlet kernels at a single [`DyadicPoint`] for indices of any
//! magnitude, at cost proportional to the spectrum size.
//!
//! Cell `j` (0-based) of a resolution-`N` grid is `[j/2^N, (j+1)/2^N)`; its
//! digit `b_{e+1}` is bit `N-1-e` of `j`.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::{Real, Scalar};
use crate::{DyadicPoint, Error, Rational, Result, SpectralNat};

/// Largest grid resolution the dense engine accepts by default (`2^22` cells).
pub const DEFAULT_RESOLUTION_CAP: u32 = 22;

pub fn check_resolution(resolution: u32, cap: u32) -> Result<()> {
    if resolution > cap {
        Err(Error::ResolutionCap {
            requested: resolution,
            cap,
        })
    } else {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    ExactInteger,
    Exact,
    Float,
}

/// A function constant on each cell of a dyadic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction<T> {
    resolution: u32,
    values: Vec<T>,
}

impl<T: Scalar> StepFunction<T> {
    pub fn new(resolution: u32, values: Vec<T>) -> Result<Self> {
        if resolution >= 63 || values.len() != 1usize << resolution {
            return Err(Error::InvalidInput(format!(
                "grid of resolution {resolution} needs {} values, got {}",
                1u128 << resolution.min(127),
                values.len()
            )));
        }
        Ok(StepFunction { resolution, values })
    }

    pub fn constant(resolution: u32, v: T) -> Self {
        StepFunction {
            resolution,
            values: vec![v; 1 << resolution],
        }
    }

    pub fn zero(resolution: u32) -> Self {
        Self::constant(resolution, T::zero())
    }

    pub fn from_fn(resolution: u32, f: impl FnMut(usize) -> T) -> Self {
        StepFunction {
            resolution,
            values: (0..1usize << resolution).map(f).collect(),
        }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_kind(&self) -> ValueKind {
        if T::is_exact() {
            ValueKind::Exact
        } else {
            ValueKind::Float
        }
    }

    /// Value on the cell containing `x`.
    pub fn value_at(&self, x: &DyadicPoint) -> T {
        self.values[x.cell_index(self.resolution) as usize]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> StepFunction<U> {
        StepFunction {
            resolution: self.resolution,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same function on a grid `extra` levels finer.
    pub fn refine(&self, extra: u32) -> Self {
        let r = self.resolution + extra;
        StepFunction {
            resolution: r,
            values: (0..1usize << r).map(|i| self.values[i >> extra]).collect(),
        }
    }

    /// `∫ f`.
    pub fn integral(&self) -> T
    where
        T: Real,
    {
        let s = self.values.iter().fold(T::zero(), |a, &v| a + v);
        s * T::pow2(-(self.resolution as i64)).expect("grid scale representable")
    }
}

/// Walsh–Fourier coefficients `f̂(k)`, `k < 2^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalshCoefficients<T> {
    resolution: u32,
    coeffs: Vec<T>,
}

impl<T: Scalar> WalshCoefficients<T> {
    pub fn new(resolution: u32, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != 1usize << resolution {
            return Err(Error::InvalidInput(format!(
                "coefficient vector of resolution {resolution} has length {}",
                coeffs.len()
            )));
        }
        Ok(WalshCoefficients { resolution, coeffs })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Indices with non-zero coefficient.
    pub fn spectrum(&self) -> Vec<u64> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, _)| k as u64)
            .collect()
    }

    /// `max Sp`, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u64> {
        self.coeffs.iter().rposition(|c| !c.is_zero()).map(|k| k as u64)
    }
}

/// Bit-reversal permutation that maps a cell index to the exponent mask of
/// its digits.
pub fn cell_digit_mask(cell: u64, resolution: u32) -> u64 {
    if resolution == 0 {
        0
    } else {
        cell.reverse_bits() >> (64 - resolution)
    }
}

/// `r_n(x)`: `+1` when digit `b_{n+1}` is 0, `-1` otherwise.
pub fn rademacher(n: u64, x: &DyadicPoint) -> i8 {
    if x.digit_for_exponent(n) {
        -1
    } else {
        1
    }
}

/// `w_n(x) = Π_{j ∈ Sp(n)} r_j(x)`; cost `O(runs(n) + resolution(x))`.
pub fn walsh_eval(n: &SpectralNat, x: &DyadicPoint) -> i8 {
    let r = x.resolution() as u64;
    let ones = n
        .bits_in(0, r)
        .filter(|&e| x.digit_for_exponent(e))
        .count();
    if ones % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Dense exponent mask of an index, for repeated evaluation at many points.
#[derive(Clone, Debug)]
pub struct SpectrumMask {
    words: Vec<u64>,
}

impl SpectrumMask {
    /// `None` when the top exponent is at or above `max_bits`.
    pub fn new(n: &SpectralNat, max_bits: u64) -> Option<Self> {
        let top = n.max_exp().map_or(0, |t| t + 1);
        if top > max_bits {
            return None;
        }
        let mut words = vec![0u64; (top as usize).div_ceil(64).max(1)];
        for &(s, e) in n.runs() {
            for b in s..e {
                words[(b / 64) as usize] |= 1 << (b % 64);
            }
        }
        Some(SpectrumMask { words })
    }

    pub fn eval(&self, x: &DyadicPoint) -> i8 {
        let parity = self
            .words
            .iter()
            .zip(x.words())
            .fold(0u32, |acc, (m, w)| acc ^ (m & w).count_ones());
        if parity & 1 == 0 {
            1
        } else {
            -1
        }
    }
}

/// Unnormalised in-place Walsh–Hadamard butterfly in natural order.
///
/// After the call `data[k] = Σ_j data_in[j] · (-1)^{popcount(j & k)}`.
/// Applying it twice multiplies by the length.
pub fn hadamard_in_place<T: Copy + Add<Output = T> + Sub<Output = T>>(data: &mut [T]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "butterfly length must be a power of two");
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

/// Reorders a grid so that cell `j` moves to its digit mask; an involution.
pub fn bit_reverse_permute<T>(data: &mut [T]) {
    let n = data.len();
    assert!(n.is_power_of_two());
    let r = n.trailing_zeros();
    for i in 0..n {
        let j = cell_digit_mask(i as u64, r) as usize;
        if i < j {
            data.swap(i, j);
        }
    }
}

/// Paley-ordered transform: `data[k] ← Σ_j data[j] w_k(cell_j)`.
fn paley_forward<T: Copy + Add<Output = T> + Sub<Output = T>>(data: &mut [T]) {
    bit_reverse_permute(data);
    hadamard_in_place(data);
}

/// Paley-ordered synthesis: `data[j] ← Σ_k data[k] w_k(cell_j)`.
fn paley_inverse<T: Copy + Add<Output = T> + Sub<Output = T>>(data: &mut [T]) {
    hadamard_in_place(data);
    bit_reverse_permute(data);
}

/// `f̂(k) = 2^{-N} Σ_j f_j w_k(cell_j)`.
pub fn fwht<T: Real>(f: &StepFunction<T>) -> WalshCoefficients<T> {
    let mut coeffs = f.values.clone();
    paley_forward(&mut coeffs);
    let scale = T::pow2(-(f.resolution as i64)).expect("grid scale representable");
    for c in coeffs.iter_mut() {
        *c = *c * scale;
    }
    WalshCoefficients {
        resolution: f.resolution,
        coeffs,
    }
}

/// `Σ_k c_k w_k` on the grid.
pub fn fwht_inverse<T: Scalar>(c: &WalshCoefficients<T>) -> StepFunction<T> {
    let mut values = c.coeffs.clone();
    paley_inverse(&mut values);
    StepFunction {
        resolution: c.resolution,
        values,
    }
}

fn cut_index(m: &SpectralNat, resolution: u32) -> Result<usize> {
    let limit = SpectralNat::pow2(resolution as u64);
    if *m > limit {
        return Err(Error::CutExceedsResolution(format!("{m} > 2^{resolution}")));
    }
    Ok(m.to_u64().expect("bounded by grid size") as usize)
}

/// `S_m(f) = Σ_{k<m} f̂(k) w_k`.
pub fn partial_sum<T: Scalar>(c: &WalshCoefficients<T>, m: &SpectralNat) -> Result<StepFunction<T>> {
    let cut = cut_index(m, c.resolution)?;
    let mut truncated = c.clone();
    for v in truncated.coeffs[cut..].iter_mut() {
        *v = T::zero();
    }
    Ok(fwht_inverse(&truncated))
}

/// Exact dyadic-rational vector: entry `i` equals `numer[i] / 2^log2_den`.
///
/// Used for both grids and coefficient vectors on the exact integer path:
/// coefficients of an integer grid of resolution `N` have denominator `2^N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicVec {
    resolution: u32,
    numer: Vec<i128>,
    log2_den: u32,
}

impl DyadicVec {
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn numerators(&self) -> &[i128] {
        &self.numer
    }

    pub fn log2_den(&self) -> u32 {
        self.log2_den
    }

    pub fn value(&self, i: usize) -> Rational {
        Rational::new(self.numer[i], 1i128 << self.log2_den)
    }

    pub fn len(&self) -> usize {
        self.numer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numer.is_empty()
    }

    /// Converts to an integer grid when every entry is integral.
    pub fn to_int_grid(&self) -> Option<StepFunction<i64>> {
        let d = self.log2_den;
        let values: Option<Vec<i64>> = self
            .numer
            .iter()
            .map(|&v| {
                (v & ((1i128 << d) - 1) == 0)
                    .then(|| i64::try_from(v >> d).ok())
                    .flatten()
            })
            .collect();
        values.map(|values| StepFunction {
            resolution: self.resolution,
            values,
        })
    }

    /// Non-zero indices.
    pub fn spectrum(&self) -> impl Iterator<Item = u64> + '_ {
        self.numer
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0)
            .map(|(k, _)| k as u64)
    }
}

/// Exact coefficients of an integer grid.
pub fn fwht_exact(f: &StepFunction<i64>) -> DyadicVec {
    let mut numer: Vec<i128> = f.values.iter().map(|&v| v as i128).collect();
    paley_forward(&mut numer);
    DyadicVec {
        resolution: f.resolution,
        numer,
        log2_den: f.resolution,
    }
}

/// Grid of `Σ_k c_k w_k` for exact coefficients.
pub fn fwht_inverse_exact(c: &DyadicVec) -> DyadicVec {
    let mut numer = c.numer.clone();
    paley_inverse(&mut numer);
    DyadicVec {
        resolution: c.resolution,
        numer,
        log2_den: c.log2_den,
    }
}

/// `S_m(f)` for exact coefficients.
pub fn partial_sum_exact(c: &DyadicVec, m: &SpectralNat) -> Result<DyadicVec> {
    let cut = cut_index(m, c.resolution)?;
    let mut t = c.clone();
    for v in t.numer[cut..].iter_mut() {
        *v = 0;
    }
    Ok(fwht_inverse_exact(&t))
}

/// Grid of `D_n = Σ_{k<n} w_k`, exact integers.
pub fn dirichlet_dense(n: &SpectralNat, resolution: u32) -> Result<StepFunction<i64>> {
    check_resolution(resolution, 40)?;
    let cut = cut_index(n, resolution).map_err(|_| {
        Error::CutExceedsResolution(format!("kernel index {n} exceeds 2^{resolution}"))
    })?;
    let mut values = vec![0i64; 1 << resolution];
    values[..cut].iter_mut().for_each(|v| *v = 1);
    paley_inverse(&mut values);
    Ok(StepFunction { resolution, values })
}

/// `D_n(x)` for indices of any size, from the block decomposition
/// `D_n = w_n Σ_{j ∈ Sp(n)} r_j D_{2^j}` with `D_{2^j} = 2^j · 1_{[0, 2^{-j})}`.
///
/// Only blocks `j ≤ z` contribute, where `z` is the number of leading zero
/// digits of `x`; `r_j(x) = 1` for `j < z` and `r_z(x) = -1`.
pub fn dirichlet_point(n: &SpectralNat, x: &DyadicPoint) -> Result<i128> {
    let z = x.leading_zeros().map_or(u64::MAX, |z| z as u64);
    let mut acc: i128 = 0;
    for e in n.bits_in(0, z.saturating_add(1)) {
        if e >= 126 {
            return Err(Error::Overflow(format!("D_n(x) needs 2^{e}")));
        }
        let block = 1i128 << e;
        acc += if e < z { block } else { -block };
    }
    Ok(walsh_eval(n, x) as i128 * acc)
}

/// `‖f‖₁ = 2^{-N} Σ |f_j|`, exact for integer grids.
pub fn l1_norm_int(f: &StepFunction<i64>) -> Rational {
    let s: i128 = f.values.iter().map(|v| v.unsigned_abs() as i128).sum();
    Rational::new(s, 1i128 << f.resolution)
}

/// `‖f‖₁` in the grid's own scalar.
pub fn l1_norm<T: Real>(f: &StepFunction<T>) -> T {
    let s = f.values.iter().fold(T::zero(), |a, &v| a + v.abs_val());
    s * T::pow2(-(f.resolution as i64)).expect("grid scale representable")
}

/// Cellwise sign with `sgn(0) = 0`.
pub fn sign_function<T: Scalar>(f: &StepFunction<T>) -> StepFunction<i64> {
    f.map(|v| v.signum_i64())
}

/// Grid of `w_k` at the given resolution (`k < 2^N`).
pub fn walsh_grid(k: u64, resolution: u32) -> StepFunction<i64> {
    StepFunction::from_fn(resolution, |j| {
        if (k & cell_digit_mask(j as u64, resolution)).count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    })
}

/// One row of the kernel-norm scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub n: u64,
    pub variation: u64,
    pub norm: Rational,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// `‖D_n‖₁` for `1 ≤ n ≤ n_max` at a fixed resolution, by adding one Walsh
/// function at a time; each row is compared exactly against `V(n)/8` and `V(n)`.
pub fn kernel_scan(n_max: u64, resolution: u32) -> Result<Vec<KernelRow>> {
    check_resolution(resolution, 24)?;
    if n_max > 1 << resolution {
        return Err(Error::CutExceedsResolution(format!(
            "n_max {n_max} exceeds 2^{resolution}"
        )));
    }
    let cells = 1usize << resolution;
    let masks: Vec<u64> = (0..cells as u64).map(|j| cell_digit_mask(j, resolution)).collect();
    let mut d = vec![0i64; cells];
    let mut abs_sum: i128 = 0;
    let den = 1i128 << resolution;
    let mut rows = Vec::with_capacity(n_max as usize);
    for k in 0..n_max {
        for (v, &m) in d.iter_mut().zip(&masks) {
            let before = v.unsigned_abs() as i128;
            *v += if (k & m).count_ones() % 2 == 0 { 1 } else { -1 };
            abs_sum += v.unsigned_abs() as i128 - before;
        }
        let n = k + 1;
        let variation = SpectralNat::from_u64(n).variation();
        let norm = Rational::new(abs_sum, den);
        rows.push(KernelRow {
            n,
            variation,
            norm,
            lower_ok: Rational::new(variation as i128, 8) <= norm,
            upper_ok: norm <= Rational::from_integer(variation as i128),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nat(v: u64) -> SpectralNat {
        SpectralNat::from_u64(v)
    }

    #[test]
    fn rademacher_examples() {
        let left = DyadicPoint::parse("0110").unwrap();
        let right = DyadicPoint::parse("1").unwrap();
        assert_eq!(rademacher(0, &left), 1);
        assert_eq!(rademacher(0, &right), -1);
        assert_eq!(rademacher(2, &right), 1);
    }

    #[test]
    fn walsh_eval_examples() {
        let x = DyadicPoint::parse("000").unwrap();
        assert_eq!(walsh_eval(&nat(0), &DyadicPoint::parse("1011").unwrap()), 1);
        assert_eq!(walsh_eval(&nat(5), &x), 1);
        assert_eq!(walsh_eval(&nat(5), &DyadicPoint::parse("001").unwrap().xor(&x)), -1);
        assert_eq!(walsh_eval(&nat(5), &DyadicPoint::parse("1").unwrap()), -1);
    }

    #[test]
    fn fwht_examples() {
        let c = fwht(&StepFunction::constant(3, 1.0f64));
        assert_eq!(c.coeffs(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w3 = walsh_grid(3, 2).map(|v| Rational::from_integer(v as i128));
        let c = fwht(&w3);
        assert_eq!(c.spectrum(), vec![3]);
        assert_eq!(c.coeffs()[3], Rational::from_integer(1));
        let d5 = dirichlet_dense(&nat(5), 3).unwrap();
        let c = fwht_exact(&d5);
        let expect: Vec<Rational> = [1, 1, 1, 1, 1, 0, 0, 0].iter().map(|&v| Rational::from_integer(v)).collect();
        assert_eq!((0..8).map(|i| c.value(i)).collect::<Vec<_>>(), expect);
    }

    #[test]
    fn dirichlet_examples() {
        assert_eq!(dirichlet_dense(&nat(1), 3).unwrap().values(), &[1; 8]);
        assert_eq!(dirichlet_dense(&nat(8), 3).unwrap().values(), &[8, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(dirichlet_dense(&nat(5), 3).unwrap().values(), &[5, 3, 1, -1, 1, -1, 1, -1]);
        assert!(dirichlet_dense(&nat(9), 3).is_err());
        for k in 0..=40u64 {
            let z = DyadicPoint::zero(8);
            assert_eq!(dirichlet_point(&SpectralNat::pow2(k), &z).unwrap(), 1i128 << k);
        }
        let x = DyadicPoint::parse("011").unwrap();
        assert_eq!(dirichlet_point(&nat(5), &x).unwrap(), -1);
    }

    #[test]
    fn partial_sum_examples() {
        let d8 = dirichlet_dense(&nat(8), 3).unwrap();
        let c = fwht_exact(&d8);
        let s = partial_sum_exact(&c, &nat(5)).unwrap();
        assert_eq!(s.to_int_grid().unwrap(), dirichlet_dense(&nat(5), 3).unwrap());
        assert!(partial_sum_exact(&c, &nat(0)).unwrap().spectrum().next().is_none());
        assert!(partial_sum_exact(&c, &nat(9)).is_err());
        let cf = fwht(&d8.map(|v| v as f64));
        assert_eq!(partial_sum(&cf, &nat(8)).unwrap().values(), &[8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn norms_and_signs() {
        let d5 = dirichlet_dense(&nat(5), 3).unwrap();
        assert_eq!(l1_norm_int(&d5), Rational::new(14, 8));
        assert_eq!(l1_norm_int(&dirichlet_dense(&nat(8), 3).unwrap()), Rational::from_integer(1));
        assert_eq!(l1_norm_int(&StepFunction::zero(4)), Rational::from_integer(0));
        assert_eq!(sign_function(&d5).values(), &[1, 1, 1, -1, 1, -1, 1, -1]);
        assert_eq!(sign_function(&StepFunction::<i64>::zero(2)).values(), &[0; 4]);
        assert_eq!(sign_function(&StepFunction::constant(2, -3i64)).values(), &[-1; 4]);
        let f = d5.map(|v| v as f64);
        assert_eq!(l1_norm(&f), 1.75);
    }

    #[test]
    fn kernel_scan_small() {
        let rows = kernel_scan(64, 6).unwrap();
        for r in &rows {
            let direct = l1_norm_int(&dirichlet_dense(&nat(r.n), 6).unwrap());
            assert_eq!(r.norm, direct);
            assert!(r.lower_ok && r.upper_ok);
        }
    }
}
