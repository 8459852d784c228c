//! One level of the divergence construction.
//!
//! Notation follows the construction: `n = n_ν`, `N = max Sp(n) + 1`,
//! `g = sgn D_n` on the `2^N` cells, `g_j(x) = g(x ⊕ (j−1)/2^N)`,
//! `H_j = Π_{i<j} (1 + w_{δ_i} g_i)` and
//!
//! * lower cut `δ_j − λ`:  `S(Q) = H_j + w_{δ_j} g_j (H_j − 1)`,
//! * upper cut `δ_j + n`:  the lower value plus `w_{δ_j} S_n(g_j)`.
//!
//! Both identities hold at every point, so cut values are computed from the
//! factored form without materialising `Q`. On a cell `Δ(N, j)` the
//! characters `w_{δ_i}` are independent fair signs (their top bits differ),
//! which makes the branch tests and the exceptional-set measure exact finite
//! computations.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::Check;
use crate::sequence::is_nested;
use crate::walsh::{
    cell_digit_mask, check_resolution, dirichlet_dense, fwht_exact, l1_norm_int, partial_sum_exact,
    sign_function, DyadicVec, SpectrumMask, StepFunction, DEFAULT_RESOLUTION_CAP,
};
use crate::{DyadicPoint, Error, Rational, Real, Result, Scalar, SpectralNat};

/// Largest `N` for which the base grid is built densely.
pub const MAX_BASE_RESOLUTION: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `δ_j = n_k − n`: the upper cut lands on `n_k`.
    A,
    /// `δ_j = n_k − n + 2^M`: the lower cut lands on `n_k`.
    B,
}

/// Sign function of the kernel and the constant local sums it induces.
#[derive(Clone, Debug)]
pub struct Base {
    pub n_nu: SpectralNat,
    pub resolution: u32,
    pub g: Vec<i64>,
    /// `S_n(g)` on the cells of resolution `N`.
    pub local_sum: Vec<Rational>,
    pub kernel_norm: Rational,
    pub g_degree: u64,
    g_coeffs: DyadicVec,
}

impl Base {
    /// `S_r(g)` on the cells of resolution `N`.
    pub fn partial_sum_grid(&self, r: u64) -> Vec<Rational> {
        if r == self.n_nu.to_u64().unwrap_or(u64::MAX) {
            return self.local_sum.clone();
        }
        let r = r.min(1 << self.resolution);
        let s = partial_sum_exact(&self.g_coeffs, &SpectralNat::from_u64(r)).expect("cut within grid");
        (0..s.len()).map(|i| s.value(i)).collect()
    }
}

fn term(seq: &[SpectralNat], pos: usize) -> Result<&SpectralNat> {
    pos.checked_sub(1)
        .and_then(|i| seq.get(i))
        .ok_or_else(|| Error::InvalidInput(format!("level {pos} outside the prefix of {}", seq.len())))
}

/// `g = sgn D_n` at resolution `N = max Sp(n) + 1`; `nu` is a 1-based
/// position in `seq`.
pub fn build_base(seq: &[SpectralNat], nu: usize) -> Result<Base> {
    if !is_nested(seq) {
        return Err(Error::NotNested);
    }
    let n = term(seq, nu)?.clone();
    let top = n
        .max_exp()
        .ok_or_else(|| Error::InvalidInput("level index must be positive".into()))?;
    let resolution = u32::try_from(top + 1).unwrap_or(u32::MAX);
    check_resolution(resolution, MAX_BASE_RESOLUTION)?;
    let d = dirichlet_dense(&n, resolution)?;
    let kernel_norm = l1_norm_int(&d);
    let g = sign_function(&d);
    let g_coeffs = fwht_exact(&g);
    let s = partial_sum_exact(&g_coeffs, &n)?;
    let local_sum: Vec<Rational> = (0..s.len()).map(|i| s.value(i)).collect();
    let v = Rational::new(n.variation() as i128, 1);
    if local_sum[0] != kernel_norm {
        return Err(Error::invariant(
            "local-sum-at-zero",
            format!("S_n(g)(0) = {} but ||D_n|| = {kernel_norm}", local_sum[0]),
        ));
    }
    if kernel_norm * Rational::from_integer(8) < v {
        return Err(Error::invariant("kernel-lower-bound", format!("||D_n|| = {kernel_norm} < V/8")));
    }
    let g_degree = g_coeffs.spectrum().last().unwrap_or(0);
    Ok(Base {
        n_nu: n,
        resolution,
        g: g.into_values(),
        local_sum,
        kernel_norm,
        g_degree,
        g_coeffs,
    })
}

/// Smallest `M ≥ N` outside every spectrum of the sequence.
///
/// For nested spectra every later term agrees with the last scanned term on
/// bits up to its top bit, so `M` is certified once `M ≤ max Sp` of the last
/// scanned term.
pub fn minimal_out_of_spectrum(seq: &[SpectralNat], resolution: u32) -> Result<u32> {
    if !is_nested(seq) {
        return Err(Error::NotNested);
    }
    let top = seq.last().and_then(|t| t.max_exp()).unwrap_or(0);
    let mut m = resolution as u64;
    while m <= top {
        if !seq.iter().any(|t| t.contains(m)) {
            return Ok(m as u32);
        }
        m += 1;
    }
    Err(Error::CannotCertifyM(format!(
        "every bit from {resolution} to {top} occurs in the prefix"
    )))
}

/// One chosen `δ_j` with the outcome of the branch test on `Δ(N, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaChoice {
    pub j: usize,
    pub delta: SpectralNat,
    pub branch: Branch,
    /// 1-based position of `n_k` in the prefix.
    pub source_k: usize,
    /// Number of earlier factors not identically 1 on the cell.
    pub active_factors: u64,
    /// Measures (relative to the cell) in the two branch conditions.
    pub measure_upper: f64,
    pub measure_lower: f64,
}

/// `|c + A| ≥ θ` where `c` is an integer possibly of size `2^t`.
fn big_at_least(t_big: Option<u64>, small: i128, a: Rational, theta: Rational) -> bool {
    match t_big {
        Some(t) if t >= 100 => true,
        Some(t) => (Rational::from_integer((1i128 << t) + small) + a).abs_val() >= theta,
        None => (Rational::from_integer(small) + a).abs_val() >= theta,
    }
}

/// Exact branch test on `Δ(N, j)` given `m` active earlier factors.
///
/// `H_j` is `2^m` with probability `2^{−m}` and 0 otherwise, `R*_j = H_j − 1`
/// and `S_n(g_j) ≡ A`. Returns the two measures and whether each is `≥ 1/2`.
fn branch_test(m: u64, a: Rational, theta: Rational) -> (f64, f64, bool, bool) {
    let p = if m > 1000 { 0.0 } else { 0.5f64.powi(m as i32) };
    let eval = |top_upper: bool, zero_upper: bool| {
        let meas = if m == 0 {
            if top_upper {
                1.0
            } else {
                0.0
            }
        } else {
            (if top_upper { p } else { 0.0 }) + (if zero_upper { 1.0 - p } else { 0.0 })
        };
        let half = if m == 0 {
            top_upper
        } else {
            zero_upper || (top_upper && m == 1)
        };
        (meas, half)
    };
    let zero = Rational::zero();
    let (m16, ok16) = eval(big_at_least(Some(m), -1, a, theta), big_at_least(None, -1, a, theta));
    let (m17, ok17) = eval(big_at_least(Some(m), -1, zero, theta), big_at_least(None, -1, zero, theta));
    (m16, m17, ok16, ok17)
}

/// Picks `δ_1, …, δ_{2^N}` with the branch rule and minimal admissible `k`.
pub fn select_deltas(seq: &[SpectralNat], nu: usize, base: &Base, m: u32) -> Result<Vec<DeltaChoice>> {
    select_deltas_with_floor(seq, nu, base, m, &SpectralNat::zero())
}

/// As [`select_deltas`], additionally requiring `δ_1 ≥ floor`.
pub fn select_deltas_with_floor(
    seq: &[SpectralNat],
    nu: usize,
    base: &Base,
    m: u32,
    floor: &SpectralNat,
) -> Result<Vec<DeltaChoice>> {
    let n = term(seq, nu)?;
    let count = 1usize << base.resolution;
    let pow_m = SpectralNat::pow2(m as u64);
    let theta = Rational::new(n.variation() as i128, 16);
    let a = base.local_sum[0];
    let mut out: Vec<DeltaChoice> = Vec::with_capacity(count);
    let mut k = nu + 1;
    for j in 1..=count {
        let c = j - 1;
        let active = (0..c).filter(|&i| base.g[c ^ i] != 0).count() as u64;
        let (m16, m17, ok16, ok17) = branch_test(active, a, theta);
        let branch = if ok16 {
            Branch::A
        } else if ok17 {
            Branch::B
        } else {
            return Err(Error::invariant(
                "eq16-17",
                format!("neither branch condition holds on cell {j}"),
            ));
        };
        let bound = match out.last() {
            None => pow_m.add(&SpectralNat::from_u64(1)),
            Some(prev) => prev.delta.add(&pow_m).shl(1),
        };
        let bound = if j == 1 && *floor > bound { floor.clone() } else { bound };
        let found = loop {
            let Some(nk) = seq.get(k - 1) else {
                return Err(Error::PrefixTooShort(format!(
                    "no admissible δ_{j} (bound {bound}) among {} terms",
                    seq.len()
                )));
            };
            let diff = nk.nested_diff(n)?;
            let cand = match branch {
                Branch::A => diff,
                Branch::B => diff.add(&pow_m),
            };
            if cand >= bound {
                break (k, cand);
            }
            k += 1;
        };
        out.push(DeltaChoice {
            j,
            delta: found.1,
            branch,
            source_k: found.0,
            active_factors: active,
            measure_upper: m16,
            measure_lower: m17,
        });
        k = found.0 + 1;
    }
    Ok(out)
}

/// Lower and upper cut of one factor; the designated one lands on `n_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPair {
    pub lower: SpectralNat,
    pub upper: SpectralNat,
    pub branch: Branch,
}

impl CutPair {
    pub fn designated(&self) -> &SpectralNat {
        match self.branch {
            Branch::A => &self.upper,
            Branch::B => &self.lower,
        }
    }
}

/// Dense materialisation of `Q` on a grid fine enough for all its characters.
#[derive(Clone, Debug)]
pub struct DenseQ {
    pub values: StepFunction<i64>,
    pub coeffs: DyadicVec,
}

impl DenseQ {
    /// `S_m(Q)` exactly, on the same grid.
    pub fn partial_sum(&self, m: &SpectralNat) -> Result<DyadicVec> {
        partial_sum_exact(&self.coeffs, m)
    }
}

#[derive(Clone, Debug)]
pub struct Lemma1Artifact {
    pub nu: usize,
    pub n_nu: SpectralNat,
    pub variation: u64,
    pub resolution: u32,
    pub m: u32,
    pub lambda: SpectralNat,
    pub base: Base,
    pub deltas: Vec<DeltaChoice>,
    pub cut_pairs: Vec<CutPair>,
    /// `deg Q = δ_L + deg g`: the top block `w_{δ_L} g_L` is the only part
    /// reaching `[δ_L, δ_L + 2^N)`.
    pub degree: SpectralNat,
    /// `min {n_k ≥ deg Q}` with its position, when the prefix reaches it.
    pub anchor: Option<(usize, SpectralNat)>,
    pub q_dense: Option<DenseQ>,
    pub checks: Vec<Check>,
    masks: Vec<SpectrumMask>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lemma1Config {
    /// Largest grid resolution used to materialise `Q`.
    pub dense_cap: u32,
    /// Largest number of factors for which per-factor dense checks run.
    pub per_factor_dense_limit: usize,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Lemma1Config {
            dense_cap: DEFAULT_RESOLUTION_CAP,
            per_factor_dense_limit: 64,
        }
    }
}

/// Runs base, `M`, δ selection and assembly for level `nu`.
pub fn build_lemma1(seq: &[SpectralNat], nu: usize, config: &Lemma1Config) -> Result<Lemma1Artifact> {
    build_lemma1_with_floor(seq, nu, &SpectralNat::zero(), config)
}

pub fn build_lemma1_with_floor(
    seq: &[SpectralNat],
    nu: usize,
    floor: &SpectralNat,
    config: &Lemma1Config,
) -> Result<Lemma1Artifact> {
    let base = build_base(seq, nu)?;
    let m = minimal_out_of_spectrum(seq, base.resolution)?;
    let deltas = select_deltas_with_floor(seq, nu, &base, m, floor)?;
    assemble_q(seq, nu, base, m, deltas, config)
}

fn violation(check: &Check) -> Error {
    Error::invariant(&check.tag, check.detail.clone())
}

/// Builds the artifact and verifies its structural identities; dense checks
/// run when `deg Q` fits under the configured resolution cap.
pub fn assemble_q(
    seq: &[SpectralNat],
    nu: usize,
    base: Base,
    m: u32,
    deltas: Vec<DeltaChoice>,
    config: &Lemma1Config,
) -> Result<Lemma1Artifact> {
    let n = term(seq, nu)?.clone();
    let big_n = base.resolution;
    let pow_m = SpectralNat::pow2(m as u64);
    let lambda = pow_m.checked_sub(&n)?;
    let mut checks = Vec::new();

    let require = |checks: &mut Vec<Check>, c: Check| -> Result<()> {
        let failed = !c.passed();
        checks.push(c);
        if failed {
            Err(violation(checks.last().expect("just pushed")))
        } else {
            Ok(())
        }
    };

    require(
        &mut checks,
        Check::new(
            "lambda",
            !lambda.is_zero() && seq.iter().all(|t| !t.contains(m as u64)),
            format!("λ = {lambda}, M = {m}"),
        ),
    )?;
    let bounds_ok = deltas.iter().enumerate().all(|(i, d)| {
        if i == 0 {
            d.delta >= pow_m.add(&SpectralNat::from_u64(1))
        } else {
            d.delta >= deltas[i - 1].delta.add(&pow_m).shl(1)
        }
    });
    require(&mut checks, Check::new("eq4", bounds_ok, "δ_1 ≥ 2^M + 1, δ_{j+1} ≥ 2(δ_j + 2^M)"))?;

    let cut_pairs: Vec<CutPair> = deltas
        .iter()
        .map(|d| {
            Ok(CutPair {
                lower: d.delta.checked_sub(&lambda)?,
                upper: d.delta.add(&n),
                branch: d.branch,
            })
        })
        .collect::<Result<_>>()?;
    let sources_ok = deltas
        .iter()
        .zip(&cut_pairs)
        .all(|(d, c)| seq.get(d.source_k - 1) == Some(c.designated()));
    require(&mut checks, Check::new("eq3", sources_ok, "designated cut equals n_k"))?;

    let floor_ok = deltas.iter().all(|d| d.delta.min_exp().is_some_and(|e| e >= big_n as u64));
    require(&mut checks, Check::new("spectrum-floor", floor_ok, "min Sp(δ_j) ≥ N"))?;
    let chain_ok = deltas.windows(2).all(|w| {
        w[0].delta.max_exp().map(|e| e + 1) <= w[1].delta.max_exp()
    });
    require(
        &mut checks,
        Check::new("eq18", chain_ok, "max Sp(δ_{j−1}) + 1 ≤ max Sp(δ_j)"),
    )?;

    let last = &deltas[deltas.len() - 1];
    let degree = last.delta.add(&SpectralNat::from_u64(base.g_degree));
    let anchor = seq
        .iter()
        .enumerate()
        .find(|(_, t)| **t >= degree)
        .map(|(i, t)| (i + 1, t.clone()));
    checks.push(match &anchor {
        Some((_, cap)) => Check::new(
            "remark7",
            cut_pairs.iter().all(|c| c.designated() <= cap),
            format!("designated cuts ≤ {cap}"),
        ),
        None => Check::unverified("remark7", "prefix ends below deg Q"),
    });
    if !checks.last().is_some_and(|c| c.verdict != super::Verdict::Fail) {
        return Err(violation(checks.last().expect("just pushed")));
    }

    let top = degree.max_exp().unwrap_or(0);
    let masks = deltas
        .iter()
        .map(|d| SpectrumMask::new(&d.delta, u64::MAX).expect("unbounded mask"))
        .collect();
    let mut art = Lemma1Artifact {
        nu,
        variation: n.variation(),
        n_nu: n,
        resolution: big_n,
        m,
        lambda,
        base,
        deltas,
        cut_pairs,
        degree,
        anchor,
        q_dense: None,
        checks,
        masks,
    };
    let dense_res = top + 1;
    if dense_res <= config.dense_cap as u64 {
        dense_checks(&mut art, dense_res as u32, config)?;
    } else {
        art.checks.push(Check::unverified(
            "dense",
            format!("deg Q needs resolution {dense_res} above cap {}", config.dense_cap),
        ));
    }
    Ok(art)
}

fn require(art: &mut Lemma1Artifact, c: Check) -> Result<()> {
    let err = (!c.passed()).then(|| violation(&c));
    art.checks.push(c);
    err.map_or(Ok(()), Err)
}

fn dense_checks(art: &mut Lemma1Artifact, res: u32, config: &Lemma1Config) -> Result<()> {
    let cells = 1usize << res;
    let big_n = art.resolution;
    let shift = res - big_n;
    let masks: Vec<u64> = (0..cells as u64).map(|c| cell_digit_mask(c, res)).collect();
    let deltas: Vec<u64> = art
        .deltas
        .iter()
        .map(|d| d.delta.to_u64().expect("fits the dense grid"))
        .collect();
    let per_factor = art.deltas.len() <= config.per_factor_dense_limit;
    let pow_n = 1u64 << big_n;
    let pow_m = 1u64 << art.m;
    let mut head = vec![1i64; cells];
    let mut factor_ok = true;
    let mut eq8_ok = true;
    let mut head_degree_ok = true;
    let mut eq8_detail = String::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let g_at = |c: usize| art.base.g[(c >> shift) ^ i];
        let w_at = |c: usize| if (delta & masks[c]).count_ones().is_multiple_of(2) { 1i64 } else { -1 };
        if per_factor && i >= 1 {
            let hc = fwht_exact(&StepFunction::new(res, head.clone())?);
            let hdeg = hc.spectrum().last().unwrap_or(0);
            let expect = deltas[i - 1] + art.base.g_degree;
            let top = art.deltas[i].delta.max_exp().unwrap_or(0);
            head_degree_ok &= hdeg == expect && hdeg < 1 << top;
            let r: Vec<i64> = (0..cells).map(|c| w_at(c) * g_at(c) * (head[c] - 1)).collect();
            let rc = fwht_exact(&StepFunction::new(res, r)?);
            let (lo, hi) = (deltas[i - 1] + pow_n, delta - pow_m);
            let mut sp = rc.spectrum();
            if let Some(bad) = sp.find(|&k| k <= lo || k >= hi) {
                eq8_ok = false;
                eq8_detail = format!("R_{} has index {bad} outside ({lo}, {hi})", i + 1);
            }
        }
        for (c, h) in head.iter_mut().enumerate() {
            let f = 1 + w_at(c) * g_at(c);
            factor_ok &= (0..=2).contains(&f);
            *h *= f;
        }
    }
    require(art, Check::new("factor-values", factor_ok, "each factor in {0, 1, 2}"))?;
    if per_factor {
        if eq8_ok {
            eq8_detail = format!("Sp(R_j) ⊂ (δ_{{j−1}} + 2^N, δ_j − 2^M) for 2 ≤ j ≤ {}", deltas.len());
        }
        require(art, Check::new("eq8", eq8_ok, eq8_detail))?;
        require(
            art,
            Check::new("eq18-dense", head_degree_ok, "deg H_j = δ_{j−1} + deg g < 2^{max Sp(δ_j)}"),
        )?;
    }
    let values = StepFunction::new(res, head)?;
    let qmin = values.values().iter().copied().min().unwrap_or(0);
    let qmax = values.values().iter().copied().max().unwrap_or(0);
    let sharp = if pow_n < 62 { 1i64 << pow_n } else { i64::MAX };
    require(
        art,
        Check::new("bullet1", qmin >= 0 && qmax <= sharp, format!("0 ≤ Q ≤ {qmax} ≤ 2^(2^N)")),
    )?;
    let coeffs = fwht_exact(&values);
    require(
        art,
        Check::new("integral", coeffs.value(0) == Rational::one(), format!("∫Q = {}", coeffs.value(0))),
    )?;
    let first = deltas[0];
    let gap_ok = coeffs.spectrum().all(|k| k == 0 || k >= first);
    require(art, Check::new("gap", gap_ok, format!("no coefficients in (0, δ_1 = {first})")))?;
    let deg = coeffs.spectrum().last().unwrap_or(0);
    require(
        art,
        Check::new(
            "degree",
            SpectralNat::from_u64(deg) == art.degree,
            format!("dense deg Q = {deg}"),
        ),
    )?;
    art.q_dense = Some(DenseQ { values, coeffs });
    Ok(())
}

/// Value of one cut with the terms of its decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct CutValue<T> {
    pub cut: SpectralNat,
    pub value: T,
    pub head: T,
    /// `w_{δ_j} R*_j = w_{δ_j} g_j (H_j − 1)`.
    pub remainder: T,
    /// `w_{δ_j} S_n(g_j)` for the upper cut, zero for the lower one.
    pub local: T,
}

fn rat<T: Real>(r: Rational) -> T {
    T::from_i64(*r.numer() as i64) / T::from_i64(*r.denom() as i64)
}

/// Per-point data for evaluating every cut of one artifact.
pub struct PointEval<'a> {
    art: &'a Lemma1Artifact,
    cell: usize,
    signs: Vec<i8>,
    g: Vec<i64>,
    /// `H_j` for `j = 1..=L+1`: `None` is 0, `Some(t)` is `2^t`.
    heads: Vec<Option<u64>>,
}

impl<'a> PointEval<'a> {
    pub fn new(art: &'a Lemma1Artifact, x: &DyadicPoint) -> Self {
        let cell = x.cell_index(art.resolution) as usize;
        let signs: Vec<i8> = art.masks.iter().map(|m| m.eval(x)).collect();
        let g: Vec<i64> = (0..signs.len()).map(|i| art.base.g[cell ^ i]).collect();
        let mut heads = Vec::with_capacity(signs.len() + 1);
        let mut h = Some(0u64);
        heads.push(h);
        for (s, gi) in signs.iter().zip(&g) {
            h = match (h, *s as i64 * gi) {
                (None, _) => None,
                (Some(t), 1) => Some(t + 1),
                (Some(_), -1) => None,
                (h, _) => h,
            };
            heads.push(h);
        }
        PointEval {
            art,
            cell,
            signs,
            g,
            heads,
        }
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    fn pow<T: Real>(h: Option<u64>) -> Result<T> {
        match h {
            None => Ok(T::zero()),
            Some(t) => i64::try_from(t)
                .ok()
                .and_then(T::pow2)
                .ok_or_else(|| Error::Overflow(format!("head 2^{t}"))),
        }
    }

    /// `H_j(x)`, `1 ≤ j ≤ L + 1`.
    pub fn head<T: Real>(&self, j: usize) -> Result<T> {
        Self::pow(self.heads[j - 1])
    }

    /// `Q(x)`.
    pub fn q<T: Real>(&self) -> Result<T> {
        Self::pow(self.heads[self.heads.len() - 1])
    }

    fn sign<T: Real>(&self, j: usize) -> T {
        T::from_i64(self.signs[j - 1] as i64)
    }

    pub fn lower<T: Real>(&self, j: usize) -> Result<CutValue<T>> {
        let h: T = self.head(j)?;
        let remainder = self.sign::<T>(j) * T::from_i64(self.g[j - 1]) * (h - T::one());
        Ok(CutValue {
            cut: self.art.cut_pairs[j - 1].lower.clone(),
            value: h + remainder,
            head: h,
            remainder,
            local: T::zero(),
        })
    }

    /// `S_n(g_j)(x)`.
    pub fn local_sum(&self, j: usize) -> Rational {
        self.art.base.local_sum[self.cell ^ (j - 1)]
    }

    pub fn upper<T: Real>(&self, j: usize) -> Result<CutValue<T>> {
        let lower = self.lower::<T>(j)?;
        let local = self.sign::<T>(j) * rat::<T>(self.local_sum(j));
        Ok(CutValue {
            cut: self.art.cut_pairs[j - 1].upper.clone(),
            value: lower.value + local,
            local,
            ..lower
        })
    }

    /// Value of the designated cut only.
    pub fn designated_value<T: Real>(&self, j: usize) -> Result<T> {
        let h: T = self.head(j)?;
        let s = self.sign::<T>(j);
        let lower = h + s * T::from_i64(self.g[j - 1]) * (h - T::one());
        Ok(match self.art.cut_pairs[j - 1].branch {
            Branch::A => lower + s * rat::<T>(self.local_sum(j)),
            Branch::B => lower,
        })
    }

    pub fn designated<T: Real>(&self, j: usize) -> Result<CutValue<T>> {
        match self.art.cut_pairs[j - 1].branch {
            Branch::A => self.upper(j),
            Branch::B => self.lower(j),
        }
    }

    /// `S_m(Q)(x)` wherever it is determined by the factored form: `m = 0`,
    /// `1 ≤ m ≤ δ_1`, `m ∈ [δ_j − 2^M, δ_j + 2^N + 1]` and `m > deg Q`.
    pub fn partial_sum<T: Real>(&self, m: &SpectralNat) -> Result<T> {
        let art = self.art;
        if m.is_zero() {
            return Ok(T::zero());
        }
        if *m > art.degree {
            return self.q();
        }
        if *m <= art.deltas[0].delta {
            return Ok(T::one());
        }
        let pow_m = SpectralNat::pow2(art.m as u64);
        let reach = SpectralNat::from_u64((1u64 << art.resolution) + 1);
        let j = art.deltas.partition_point(|d| d.delta.add(&reach) < *m);
        let not_computable = || {
            Error::CutNotComputable(format!("S_{m}(Q) cuts through a remainder block"))
        };
        let d = &art.deltas.get(j).ok_or_else(not_computable)?.delta;
        if d.checked_sub(&pow_m).map_or(true, |lo| *m < lo) {
            return Err(not_computable());
        }
        let j = j + 1;
        let lower = self.lower::<T>(j)?.value;
        if *m <= *d {
            return Ok(lower);
        }
        let r = m.checked_sub(d)?.to_u64().expect("bounded by 2^N + 1");
        let grid = art.base.partial_sum_grid(r);
        Ok(lower + self.sign::<T>(j) * rat::<T>(grid[self.cell ^ (j - 1)]))
    }

    /// Designated cut of largest magnitude among those reaching `V/16`:
    /// `(j, source k, value)`.
    pub fn witness<T: Real>(&self) -> Result<Option<(usize, usize, T)>> {
        let theta = T::from_ratio(self.art.variation as i64, 16);
        let mut best: Option<(usize, usize, T)> = None;
        for j in 1..=self.signs.len() {
            let v = self.designated_value::<T>(j)?.abs_val();
            if v >= theta && best.as_ref().is_none_or(|b| v > b.2) {
                best = Some((j, self.art.deltas[j - 1].source_k, v));
            }
        }
        Ok(best)
    }
}

/// Lower and upper cut values of factor `j` at `x`.
pub fn eval_cut<T: Real>(art: &Lemma1Artifact, x: &DyadicPoint, j: usize) -> Result<(CutValue<T>, CutValue<T>)> {
    if j == 0 || j > art.deltas.len() {
        return Err(Error::InvalidInput(format!("factor {j} out of range")));
    }
    let pe = PointEval::new(art, x);
    Ok((pe.lower(j)?, pe.upper(j)?))
}

/// Relative measure of a subset of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub approx: f64,
    pub exact: Option<Rational>,
    pub at_least_quarter: bool,
}

impl Measure {
    fn from_count(count: &BigUint, log2_total: u64) -> Self {
        let total = BigUint::one() << log2_total;
        let scaled = (count << 64u32) / &total;
        Measure {
            approx: scaled.to_f64().unwrap_or(f64::INFINITY) / 2f64.powi(64),
            exact: (log2_total <= 120).then(|| {
                Rational::new(
                    count.to_i128().expect("bounded by total"),
                    1i128 << log2_total,
                )
            }),
            at_least_quarter: count * 4u32 >= total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMeasure {
    pub cell: usize,
    /// Part of the cell where some designated cut reaches `V/16`.
    pub any: Measure,
    /// Part of the cell where the cell's own designated cut does.
    pub own: Measure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EReport {
    pub threshold: Rational,
    pub cells: Vec<CellMeasure>,
    /// Same measures counted on the dense grid, when `Q` was materialised.
    pub dense: Option<Vec<Rational>>,
    pub dense_agrees: Option<bool>,
    pub all_at_least_quarter: bool,
}

/// Exceptional set per cell, exactly.
///
/// On `Δ(N, c)` the signs `w_{δ_i}` are independent and fair, so the cut
/// values form a branching process in the head `H` (0 or a power of two);
/// the recursion tracks `(H, hit so far)` with integer path counts out of
/// `2^L`. Cost is `O(L^2)` states-steps per cell.
pub fn extract_e(art: &Lemma1Artifact) -> Result<EReport> {
    let l = art.deltas.len();
    let theta = Rational::new(art.variation as i128, 16);
    const ZERO: i64 = -1;
    const SETTLED: i64 = -2;
    let mut cells = Vec::with_capacity(l);
    for c in 0..l {
        let mut states: BTreeMap<(i64, bool, bool), BigUint> = BTreeMap::new();
        states.insert((0, false, false), BigUint::one());
        for i in 0..l {
            let gi = art.base.g[c ^ i];
            let a = art.base.local_sum[c ^ i];
            let branch = art.deltas[i].branch;
            let mut next: BTreeMap<(i64, bool, bool), BigUint> = BTreeMap::new();
            for ((h, any, own), cnt) in states {
                for s in [1i64, -1] {
                    let sg = s * gi;
                    let hit = h != SETTLED && {
                        let addend = match branch {
                            Branch::A => a * Rational::from_integer(s as i128),
                            Branch::B => Rational::zero(),
                        };
                        match (h, sg) {
                            (ZERO, _) => big_at_least(None, -(sg as i128), addend, theta),
                            (t, 1) => big_at_least(Some(t as u64 + 1), -1, addend, theta),
                            (_, -1) => big_at_least(None, 1, addend, theta),
                            (t, _) => big_at_least(Some(t as u64), 0, addend, theta),
                        }
                    };
                    let any2 = any || hit;
                    let own2 = own || (hit && i == c);
                    let h2 = if any2 && i >= c {
                        SETTLED
                    } else {
                        match (h, sg) {
                            (ZERO, _) | (SETTLED, _) => h,
                            (t, 1) => t + 1,
                            (_, -1) => ZERO,
                            (t, _) => t,
                        }
                    };
                    *next.entry((h2, any2, own2)).or_default() += &cnt;
                }
            }
            states = next;
        }
        let mut any_count = BigUint::zero();
        let mut own_count = BigUint::zero();
        for ((_, any, own), cnt) in &states {
            if *any {
                any_count += cnt;
            }
            if *own {
                own_count += cnt;
            }
        }
        cells.push(CellMeasure {
            cell: c + 1,
            any: Measure::from_count(&any_count, l as u64),
            own: Measure::from_count(&own_count, l as u64),
        });
    }
    let (dense, dense_agrees) = match &art.q_dense {
        None => (None, None),
        Some(q) => {
            let res = q.values.resolution();
            let fine = res - art.resolution;
            let mut hit = vec![false; 1 << res];
            for pair in &art.cut_pairs {
                let s = q.partial_sum(pair.designated())?;
                for (i, h) in hit.iter_mut().enumerate() {
                    *h |= s.value(i).abs_val() >= theta;
                }
            }
            let per_cell: Vec<Rational> = hit
                .chunks(1 << fine)
                .map(|ch| Rational::new(ch.iter().filter(|&&b| b).count() as i128, 1i128 << fine))
                .collect();
            let agrees = cells.iter().zip(&per_cell).all(|(c, d)| c.any.exact == Some(*d));
            (Some(per_cell), Some(agrees))
        }
    };
    let all_at_least_quarter = cells.iter().all(|c| c.any.at_least_quarter);
    if let Some(bad) = cells.iter().find(|c| !c.any.at_least_quarter) {
        return Err(Error::invariant(
            "E-quarter",
            format!("cell {} has measure {} < 1/4", bad.cell, bad.any.approx),
        ));
    }
    if dense_agrees == Some(false) {
        return Err(Error::invariant("E-dense", "dense count disagrees with the exact recursion"));
    }
    Ok(EReport {
        threshold: theta,
        cells,
        dense,
        dense_agrees,
        all_at_least_quarter,
    })
}

/// Serializable summary of an artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Record {
    pub nu: usize,
    pub n_nu: SpectralNat,
    pub variation: u64,
    pub resolution: u32,
    pub m: u32,
    pub lambda: SpectralNat,
    pub kernel_norm: Rational,
    pub g: Vec<i64>,
    pub deltas: Vec<DeltaChoice>,
    pub cut_pairs: Vec<CutPair>,
    pub degree: SpectralNat,
    pub anchor: Option<(usize, SpectralNat)>,
    pub dense_resolution: Option<u32>,
    pub q_max: Option<i64>,
    pub checks: Vec<Check>,
    pub exceptional_set: Option<EReport>,
}

impl Lemma1Artifact {
    pub fn record(&self, e: Option<EReport>) -> Lemma1Record {
        Lemma1Record {
            nu: self.nu,
            n_nu: self.n_nu.clone(),
            variation: self.variation,
            resolution: self.resolution,
            m: self.m,
            lambda: self.lambda.clone(),
            kernel_norm: self.base.kernel_norm,
            g: self.base.g.clone(),
            deltas: self.deltas.clone(),
            cut_pairs: self.cut_pairs.clone(),
            degree: self.degree.clone(),
            anchor: self.anchor.clone(),
            dense_resolution: self.q_dense.as_ref().map(|q| q.values.resolution()),
            q_max: self
                .q_dense
                .as_ref()
                .and_then(|q| q.values.values().iter().copied().max()),
            checks: self.checks.clone(),
            exceptional_set: e,
        }
    }

    pub fn check(&self, tag: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.tag == tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{generate_sequence, SequenceKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn canonical(count: usize) -> Vec<SpectralNat> {
        generate_sequence(SequenceKind::NestedCanonical, count).unwrap()
    }

    #[test]
    fn base_examples() {
        let seq = canonical(12);
        let b = build_base(&seq, 1).unwrap();
        assert_eq!(b.resolution, 3);
        assert_eq!(b.g, vec![1, 1, 1, -1, 1, -1, 1, -1]);
        assert_eq!(b.local_sum[0], Rational::new(7, 4));
        assert_eq!(build_base(&seq, 2).unwrap().resolution, 5);
        assert_eq!(minimal_out_of_spectrum(&seq, 3).unwrap(), 3);
        assert_eq!(minimal_out_of_spectrum(&seq, 5).unwrap(), 5);
        let full: Vec<SpectralNat> = [1u64, 3, 7, 15].iter().map(|&v| SpectralNat::from_u64(v)).collect();
        assert!(matches!(minimal_out_of_spectrum(&full, 2), Err(Error::CannotCertifyM(_))));
    }

    #[test]
    fn level_one_canonical() {
        let seq = canonical(12);
        let art = build_lemma1(&seq, 1, &Lemma1Config::default()).unwrap();
        assert_eq!((art.m, art.lambda.to_u64()), (3, Some(3)));
        let d: Vec<u64> = art.deltas.iter().map(|d| d.delta.to_u64().unwrap()).collect();
        assert_eq!(&d[..3], &[16, 80, 336]);
        assert_eq!(d.len(), 8);
        assert!(d.windows(2).all(|w| w[1] >= 2 * (w[0] + 8)));
        assert_eq!(art.deltas[0].branch, Branch::A);
        let q = art.q_dense.as_ref().expect("dense at level one");
        assert!(q.values.resolution() <= 19);
        assert!(q.values.values().iter().all(|&v| (0..=256).contains(&v)));
        assert_eq!(q.coeffs.value(0), Rational::one());
        for tag in ["eq3", "eq4", "eq8", "eq18", "bullet1", "integral", "gap", "degree", "remark7"] {
            assert!(art.check(tag).is_some_and(Check::passed), "{tag}");
        }
        let e = extract_e(&art).unwrap();
        assert_eq!(e.cells.len(), 8);
        assert!(e.all_at_least_quarter);
        assert_eq!(e.dense_agrees, Some(true));
    }

    #[test]
    fn pointwise_matches_dense() {
        let seq = canonical(12);
        let art = build_lemma1(&seq, 1, &Lemma1Config::default()).unwrap();
        let q = art.q_dense.as_ref().unwrap();
        let res = q.values.resolution();
        let grids: Vec<(DyadicVec, DyadicVec)> = art
            .cut_pairs
            .iter()
            .map(|c| (q.partial_sum(&c.lower).unwrap(), q.partial_sum(&c.upper).unwrap()))
            .collect();
        let half = Rational::new(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let x = DyadicPoint::random(res, &mut rng);
            let cell = x.cell_index(res) as usize;
            let pe = PointEval::new(&art, &x);
            for (j, (lo, hi)) in grids.iter().enumerate() {
                let (l, u) = (pe.lower::<Rational>(j + 1).unwrap(), pe.upper::<Rational>(j + 1).unwrap());
                assert_eq!(l.value, lo.value(cell));
                assert_eq!(u.value, hi.value(cell));
                if j == pe.cell() {
                    assert!((u.value - l.value).abs_val() >= half);
                }
            }
            assert_eq!(pe.q::<Rational>().unwrap(), Rational::from_integer(q.values.values()[cell] as i128));
            if let Some((_, k, v)) = pe.witness::<Rational>().unwrap() {
                assert!(v >= Rational::new(1, 4));
                assert!(k > art.nu && art.anchor.as_ref().is_some_and(|(_, cap)| seq[k - 1] <= *cap));
            }
        }
    }

    #[test]
    fn first_cut_gap_is_local_norm() {
        let seq = canonical(12);
        let art = build_lemma1(&seq, 1, &Lemma1Config::default()).unwrap();
        let x = DyadicPoint::from_digits(&[false, false, false, true, true]);
        let (l, u) = eval_cut::<Rational>(&art, &x, 1).unwrap();
        let w = Rational::from_integer(art.masks[0].eval(&x) as i128);
        assert_eq!(u.value - l.value, w * Rational::new(7, 4));
    }

    #[test]
    fn general_partial_sums_match_dense() {
        let seq = canonical(12);
        let art = build_lemma1(&seq, 1, &Lemma1Config::default()).unwrap();
        let q = art.q_dense.as_ref().unwrap();
        let res = q.values.resolution();
        let deg = art.degree.to_u64().unwrap();
        let mut cuts = vec![0, 1, 9, 16, deg + 1, deg + 100];
        for d in &art.deltas {
            let d = d.delta.to_u64().unwrap();
            cuts.extend(d - 8..=d + 9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<DyadicPoint> = (0..64).map(|_| DyadicPoint::random(res, &mut rng)).collect();
        for m in cuts {
            let grid = q.partial_sum(&SpectralNat::from_u64(m)).unwrap();
            for x in &xs {
                let pe = PointEval::new(&art, x);
                let v: Rational = pe.partial_sum(&SpectralNat::from_u64(m)).unwrap();
                assert_eq!(v, grid.value(x.cell_index(res) as usize), "m = {m}");
            }
        }
        let pe = PointEval::new(&art, &xs[0]);
        assert!(matches!(
            pe.partial_sum::<Rational>(&SpectralNat::from_u64(50)),
            Err(Error::CutNotComputable(_))
        ));
    }

    #[test]
    fn level_two_is_pointwise_only() {
        let seq = canonical(40);
        let art = build_lemma1(&seq, 2, &Lemma1Config::default()).unwrap();
        assert_eq!((art.resolution, art.m, art.deltas.len()), (5, 5, 32));
        assert!(art.q_dense.is_none());
        assert_eq!(art.check("dense").map(|c| c.verdict), Some(super::super::Verdict::Unverified));
        let e = extract_e(&art).unwrap();
        assert!(e.all_at_least_quarter && e.dense.is_none());
    }
}
