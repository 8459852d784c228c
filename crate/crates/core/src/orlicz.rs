//! Piecewise-linear growth functions.
//!
//! A [`PiecewiseConvex`] is described by its knots `(u_i, φ(u_i))` starting at
//! `(0, 0)` and the slope of each segment `[u_i, u_{i+1})`; the last slope
//! extends to infinity unless a domain end is set, in which case the function
//! is `+∞` beyond it. With [`ExpFloat`](crate::ExpFloat) as scalar the
//! abscissae `2^{2n_ν}` stay representable for indices far beyond `f64`.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::sequence::is_nested;
use crate::walsh::StepFunction;
use crate::{Error, Result, SpectralNat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConvex<T> {
    knots: Vec<(T, T)>,
    slopes: Vec<T>,
    domain_end: Option<T>,
}

impl<T: Real> PiecewiseConvex<T> {
    /// Knots with explicit per-segment slopes; `slopes[i]` applies from
    /// `knots[i]` on, the last one to the right end of the domain.
    pub fn from_parts(knots: Vec<(T, T)>, slopes: Vec<T>, domain_end: Option<T>) -> Result<Self> {
        if knots.is_empty() || knots[0].0 != T::zero() || knots[0].1 != T::zero() {
            return Err(Error::InvalidInput("first knot must be (0, 0)".into()));
        }
        if slopes.len() != knots.len() {
            return Err(Error::InvalidInput(format!(
                "{} knots need {} slopes, got {}",
                knots.len(),
                knots.len(),
                slopes.len()
            )));
        }
        if let Some(i) = knots.windows(2).position(|w| w[0].0 >= w[1].0) {
            return Err(Error::NotIncreasing(i + 1));
        }
        if let Some(end) = domain_end {
            if end < knots[knots.len() - 1].0 {
                return Err(Error::InvalidInput("domain end precedes the last knot".into()));
            }
        }
        Ok(PiecewiseConvex {
            knots,
            slopes,
            domain_end,
        })
    }

    /// Knots joined by chords, extended by `tail_slope`.
    pub fn from_knots(knots: Vec<(T, T)>, tail_slope: T) -> Result<Self> {
        let mut slopes: Vec<T> = knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        slopes.push(tail_slope);
        Self::from_parts(knots, slopes, None)
    }

    pub fn linear(slope: T) -> Self {
        PiecewiseConvex {
            knots: vec![(T::zero(), T::zero())],
            slopes: vec![slope],
            domain_end: None,
        }
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    pub fn slopes(&self) -> &[T] {
        &self.slopes
    }

    pub fn domain_end(&self) -> Option<T> {
        self.domain_end
    }

    pub fn tail_slope(&self) -> T {
        self.slopes[self.slopes.len() - 1]
    }

    pub fn last_knot(&self) -> T {
        self.knots[self.knots.len() - 1].0
    }

    /// Index of the segment containing `u ≥ 0`.
    fn segment(&self, u: T) -> usize {
        self.knots.partition_point(|k| k.0 <= u).saturating_sub(1)
    }

    /// `φ(u)`, `None` beyond the domain end or for negative arguments.
    pub fn eval(&self, u: T) -> Option<T> {
        if u < T::zero() || self.domain_end.is_some_and(|e| u > e) {
            return None;
        }
        let i = self.segment(u);
        let (a, v) = self.knots[i];
        Some(if u == a { v } else { v + self.slopes[i] * (u - a) })
    }

    /// Right derivative at `u`.
    pub fn right_derivative(&self, u: T) -> T {
        self.slopes[self.segment(u)]
    }

    /// Left derivative at `u > 0`.
    pub fn left_derivative(&self, u: T) -> T {
        let i = self.segment(u);
        if self.knots[i].0 == u && i > 0 {
            self.slopes[i - 1]
        } else {
            self.slopes[i]
        }
    }

    pub fn is_convex(&self) -> bool {
        self.slopes.windows(2).all(|w| w[0] <= w[1])
    }

    /// Slopes strictly increase between knots; the tail may repeat the
    /// last one.
    pub fn is_strictly_convex(&self) -> bool {
        let n = self.slopes.len();
        self.slopes[..n - 1].windows(2).all(|w| w[0] < w[1]) && (n < 2 || self.slopes[n - 2] <= self.slopes[n - 1])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.slopes.iter().all(|&s| s >= T::zero())
    }

    /// `c·φ`.
    pub fn scale(&self, c: T) -> Self {
        PiecewiseConvex {
            knots: self.knots.iter().map(|&(u, v)| (u, v * c)).collect(),
            slopes: self.slopes.iter().map(|&s| s * c).collect(),
            domain_end: self.domain_end,
        }
    }

    /// Same function in another scalar type.
    pub fn convert<U: Real>(&self, f: impl Fn(T) -> U) -> PiecewiseConvex<U> {
        PiecewiseConvex {
            knots: self.knots.iter().map(|&(u, v)| (f(u), f(v))).collect(),
            slopes: self.slopes.iter().map(|&s| f(s)).collect(),
            domain_end: self.domain_end.map(&f),
        }
    }
}

fn pow2_or_overflow<T: Real>(e: u64, what: &str) -> Result<T> {
    i64::try_from(e)
        .ok()
        .and_then(T::pow2)
        .ok_or_else(|| Error::Overflow(format!("{what} 2^{e} not representable")))
}

fn index_u64(n: &SpectralNat) -> Result<u64> {
    n.to_u64()
        .filter(|&v| v < 1 << 62)
        .ok_or_else(|| Error::Overflow(format!("knot exponent for index {n}")))
}

fn check_prefix(seq: &[SpectralNat], knot_count: usize) -> Result<&[SpectralNat]> {
    if knot_count == 0 {
        return Err(Error::InvalidInput("knot count must be positive".into()));
    }
    if seq.len() < knot_count {
        return Err(Error::TooShort {
            needed: knot_count,
            got: seq.len(),
        });
    }
    let prefix = &seq[..knot_count];
    if !is_nested(prefix) {
        return Err(Error::NotNested);
    }
    if let Some(i) = prefix
        .windows(2)
        .position(|w| w[0].variation() >= w[1].variation())
    {
        return Err(Error::InvalidInput(format!(
            "variation must increase strictly along the knots (position {})",
            i + 1
        )));
    }
    Ok(prefix)
}

/// Slope `t_ν` kept in the form `base + δ / (2^gap − 1)`.
///
/// For `ν ≥ 1`, `base = V(n_{ν+1})`, `δ = V(n_{ν+1}) − V(n_ν)` and
/// `gap = 2(n_{ν+1} − n_ν)`; `t_0 = V(n_1)` has no excess. Nothing larger
/// than the variations is ever formed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlopeCertificate {
    pub index: usize,
    pub base: u64,
    pub delta: u64,
    pub gap: u64,
}

impl SlopeCertificate {
    /// Whether `δ / (2^gap − 1) < 1`.
    pub fn excess_below_one(&self) -> bool {
        self.delta == 0 || self.gap >= 64 || (self.delta as u128) < (1u128 << self.gap) - 1
    }

    /// Exact comparison of the excesses `δ / (2^gap − 1)`.
    fn cmp_excess(&self, other: &Self) -> Ordering {
        match (self.delta, other.delta) {
            (0, 0) => return Ordering::Equal,
            (0, _) => return Ordering::Less,
            (_, 0) => return Ordering::Greater,
            _ => {}
        }
        const EXACT_LIMIT: u64 = 1 << 16;
        if self.gap <= EXACT_LIMIT && other.gap <= EXACT_LIMIT {
            let m = |g: u64| (BigUint::one() << g) - BigUint::one();
            let l = BigUint::from(self.delta) * m(other.gap);
            let r = BigUint::from(other.delta) * m(self.gap);
            l.cmp(&r)
        } else {
            let lg = |c: &Self| (c.delta as f64).log2() - c.gap as f64;
            lg(self).partial_cmp(&lg(other)).unwrap_or(Ordering::Equal)
        }
    }

    /// Exact `t_self < t_other`, valid when both excesses are below one.
    pub fn less_than(&self, other: &Self) -> bool {
        match self.base.cmp(&other.base) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.cmp_excess(other) == Ordering::Less,
        }
    }

    /// The slope in scalar arithmetic (the excess may round away).
    pub fn value<T: Real>(&self) -> T {
        let base = T::from_i64(self.base as i64);
        if self.delta == 0 {
            return base;
        }
        match i64::try_from(self.gap).ok().and_then(T::pow2) {
            Some(p) => base + T::from_i64(self.delta as i64) / (p - T::one()),
            None => base,
        }
    }
}

/// `t_0, …, t_{K−1}` for the first `K` knots.
pub fn slope_certificates(seq: &[SpectralNat], knot_count: usize) -> Result<Vec<SlopeCertificate>> {
    let prefix = check_prefix(seq, knot_count)?;
    let mut out = vec![SlopeCertificate {
        index: 0,
        base: prefix[0].variation(),
        delta: 0,
        gap: 0,
    }];
    for (nu, w) in prefix.windows(2).enumerate() {
        let (lo, hi) = (index_u64(&w[0])?, index_u64(&w[1])?);
        out.push(SlopeCertificate {
            index: nu + 1,
            base: w[1].variation(),
            delta: w[1].variation() - w[0].variation(),
            gap: 2 * (hi - lo),
        });
    }
    Ok(out)
}

/// Whether the certified slopes increase strictly; returns the first
/// offending position otherwise.
pub fn check_slope_monotonicity(certs: &[SlopeCertificate]) -> std::result::Result<(), usize> {
    if let Some(c) = certs.iter().find(|c| !c.excess_below_one()) {
        return Err(c.index);
    }
    match certs.windows(2).position(|w| !w[0].less_than(&w[1])) {
        Some(i) => Err(i + 1),
        None => Ok(()),
    }
}

/// Auxiliary bound used to compare consecutive slopes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxBound {
    pub index: usize,
    pub delta: u64,
    pub gap: u64,
    /// `n_{ν+1} − n_ν ≥ δ_ν`.
    pub gap_ok: bool,
    /// `δ_ν / (2^{2δ_ν} − 1) < 1`.
    pub bound_ok: bool,
}

pub fn aux_bounds(certs: &[SlopeCertificate]) -> Vec<AuxBound> {
    certs
        .iter()
        .filter(|c| c.index > 0)
        .map(|c| AuxBound {
            index: c.index,
            delta: c.delta,
            gap: c.gap,
            gap_ok: c.gap >= 2 * c.delta,
            bound_ok: SlopeCertificate {
                gap: 2 * c.delta,
                ..c.clone()
            }
            .excess_below_one(),
        })
        .collect()
}

/// `φ_(n_k)` through the knots `(2^{2n_ν}, 2^{2n_ν} V(n_ν))`, `ν ≤ K`.
///
/// Linear on `[0, 2^{2n_1}]`; beyond the last knot the last slope continues.
/// Slopes come from [`slope_certificates`].
pub fn build_phi<T: Real>(seq: &[SpectralNat], knot_count: usize) -> Result<PiecewiseConvex<T>> {
    let certs = slope_certificates(seq, knot_count)?;
    let mut knots = vec![(T::zero(), T::zero())];
    for n in &seq[..knot_count] {
        let u = pow2_or_overflow::<T>(2 * index_u64(n)?, "knot")?;
        knots.push((u, u * T::from_i64(n.variation() as i64)));
    }
    let mut slopes: Vec<T> = certs.iter().map(|c| c.value()).collect();
    slopes.push(slopes[slopes.len() - 1]);
    PiecewiseConvex::from_parts(knots, slopes, None)
}

/// Exponents `m` at which `φ(2^{m+1}) / φ(2^m)` can attain its extremes.
///
/// Inside a range of `m` where `2^m` and `2^{m+1}` stay in fixed segments
/// the ratio is a Möbius function of `2^m`, hence monotone, so only
/// exponents next to a knot matter. Small ranges are scanned completely.
fn doubling_exponents<T: Real>(phi: &PiecewiseConvex<T>, lo: i64, hi: i64) -> Vec<i64> {
    if hi < lo {
        return Vec::new();
    }
    if hi - lo <= 4096 {
        return (lo..=hi).collect();
    }
    let mut ms = vec![lo, hi];
    for &(u, _) in &phi.knots[1..] {
        let e = u.log2_f64().floor() as i64;
        ms.extend((e - 2..=e + 1).filter(|m| (lo..=hi).contains(m)));
    }
    ms.sort_unstable();
    ms.dedup();
    ms
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub convex: bool,
    pub strictly_convex: bool,
    pub superlinear_evidence: bool,
    /// `φ(2^{m+1}) ≤ 2 φ(2^m)` at every scanned `m ≥ 0` up to the last knot.
    pub delta2: bool,
    pub delta2_failures: usize,
    pub first_delta2_failure: Option<i64>,
    /// `max φ(2^{m+1}) / φ(2^m)` over the same exponents.
    pub doubling_constant: f64,
    pub scanned_exponents: usize,
}

/// Doubling ratios `(m, φ(2^{m+1}) / φ(2^m))` for `0 ≤ m`, `2^{m+1} ≤ last knot`.
pub fn doubling_ratios<T: Real>(phi: &PiecewiseConvex<T>) -> Vec<(i64, T, T)> {
    let top = phi.last_knot();
    let hi = if top > T::zero() {
        top.log2_f64().floor() as i64 - 1
    } else {
        -1
    };
    doubling_exponents(phi, 0, hi)
        .into_iter()
        .filter_map(|m| {
            let u = T::pow2(m)?;
            let v = T::pow2(m + 1)?;
            Some((m, phi.eval(u)?, phi.eval(v)?))
        })
        .collect()
}

pub fn check_phi_properties<T: Real>(phi: &PiecewiseConvex<T>) -> PhiReport {
    let ratios = doubling_ratios(phi);
    let two = T::from_i64(2);
    let failures: Vec<i64> = ratios
        .iter()
        .filter(|(_, a, b)| *b > two * *a)
        .map(|r| r.0)
        .collect();
    let doubling_constant = ratios
        .iter()
        .filter(|(_, a, _)| *a > T::zero())
        .map(|(_, a, b)| (*b / *a).to_f64())
        .fold(0.0, f64::max);
    let s = phi.slopes();
    PhiReport {
        convex: phi.is_convex(),
        strictly_convex: phi.is_strictly_convex(),
        superlinear_evidence: phi.is_strictly_convex() && s[0] < s[s.len() - 1],
        delta2: failures.is_empty(),
        delta2_failures: failures.len(),
        first_delta2_failure: failures.first().copied(),
        doubling_constant,
        scanned_exponents: ratios.len(),
    }
}

/// Observed constants of `c·u·log2 log2 u ≤ φ(u) ≤ C·u·log2 log2 u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthWindow {
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
}

/// Samples `u = 2^m` on `[8, last knot]`: every exponent next to a knot plus
/// `extra` log-spaced exponents.
pub fn growth_window<T: Real>(phi: &PiecewiseConvex<T>, extra: usize) -> Result<GrowthWindow> {
    let top = phi.last_knot().log2_f64().floor() as i64;
    if top < 3 {
        return Err(Error::InvalidInput("last knot below 8".into()));
    }
    let mut ms = doubling_exponents(phi, 3, top);
    let span = (top - 3) as f64;
    for i in 0..=extra {
        let f = i as f64 / extra.max(1) as f64;
        ms.push(3 + (span * f * f).round() as i64);
    }
    ms.sort_unstable();
    ms.dedup();
    let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
    for &m in &ms {
        let u = pow2_or_overflow::<T>(m as u64, "sample")?;
        let v = phi.eval(u).ok_or_else(|| Error::InvalidInput("sample beyond domain".into()))?;
        let r = (v.log2_f64() - m as f64).exp2() / (m as f64).log2();
        lower = lower.min(r);
        upper = upper.max(r);
    }
    Ok(GrowthWindow {
        lower,
        upper,
        samples: ms.len(),
    })
}

/// One interpolation level of [`lemma3_gamma`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaLevel<T> {
    pub j: u32,
    pub u: T,
    /// Start of the connecting chord and its slope `M_j` (with respect to
    /// `α_j`); absent on the last level, where `γ = 2α_J` continues.
    pub v: Option<T>,
    pub m: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gamma<T> {
    pub gamma: PiecewiseConvex<T>,
    pub levels: Vec<GammaLevel<T>>,
}

fn scaled<T: Real>(v: T, j: u32) -> T {
    v * T::pow2(-(j as i64)).expect("level scale representable")
}

/// `α(u)`, which must be finite on the scanned range.
fn at<T: Real>(phi: &PiecewiseConvex<T>, u: T) -> T {
    phi.eval(u).expect("argument inside the scanned range")
}

/// Interpolant between `β = o(α)` and `α`.
///
/// Smallness of `β` is only tested through domination: the error fires when
/// `β ≤ α/2` fails at every scanned abscissa. `u_j` is the leftmost scanned abscissa (knots of `α` and `β`) where
/// `β ≤ α/2^j` from there on and the tangent of `α_{j−1}` at `u_{j−1}`
/// stays below `α_j(u_j)`. Levels stop when no further abscissa qualifies;
/// beyond the last `u_J`, `γ = 2α_J`.
pub fn lemma3_gamma<T: Real>(alpha: &PiecewiseConvex<T>, beta: &PiecewiseConvex<T>) -> Result<Gamma<T>> {
    if !alpha.is_convex() || !alpha.is_nondecreasing() {
        return Err(Error::InvalidInput("α must be convex and non-decreasing".into()));
    }
    let mut cand: Vec<T> = alpha
        .knots()
        .iter()
        .chain(beta.knots())
        .map(|k| k.0)
        .filter(|&u| u > T::zero())
        .collect();
    cand.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    cand.dedup();
    let not_o = || Error::NotDominated("β is not o(α) on range".into());
    let dominated = |j: u32, from: usize| {
        cand[from..]
            .iter()
            .all(|&u| beta.eval(u).is_some_and(|b| b <= scaled(at(alpha, u), j)))
            && beta.tail_slope() <= scaled(alpha.tail_slope(), j)
    };
    let first = (0..cand.len()).find(|&i| dominated(1, i)).ok_or_else(not_o)?;

    let mut us = vec![first];
    loop {
        let j = us.len() as u32;
        let ui = us[us.len() - 1];
        let u = cand[ui];
        let base = scaled(at(alpha, u), j);
        let d = scaled(alpha.right_derivative(u), j);
        let next = (ui + 1..cand.len()).find(|&i| {
            let c = cand[i];
            dominated(j + 1, i) && base + d * (c - u) <= scaled(at(alpha, c), j + 1)
        });
        match next {
            Some(i) => us.push(i),
            None => break,
        }
    }

    let mut levels = Vec::with_capacity(us.len());
    for (idx, &ui) in us.iter().enumerate() {
        let j = idx as u32 + 1;
        let u = cand[ui];
        let (v, m) = match us.get(idx + 1) {
            None => (None, None),
            Some(&ni) => {
                let un = cand[ni];
                let target = scaled(at(alpha, un), j + 1);
                let breaks = std::iter::once(u).chain(
                    alpha
                        .knots()
                        .iter()
                        .map(|k| k.0)
                        .filter(|&a| a > u && a < un),
                );
                let mut chosen = None;
                for p in breaks {
                    let ap = scaled(at(alpha, p), j);
                    let reach = ap + scaled(alpha.right_derivative(p), j) * (un - p);
                    if reach >= target {
                        chosen = Some((p, (target - ap) / (un - p)));
                        break;
                    }
                }
                let (p, m) = chosen.ok_or_else(|| {
                    Error::invariant("lemma3-chord", format!("no chord start on level {j}"))
                })?;
                (Some(p), Some(m))
            }
        };
        levels.push(GammaLevel { j, u, v, m });
    }

    let mut knots = vec![(T::zero(), T::zero())];
    let u1 = levels[0].u;
    let mut slopes = vec![at(alpha, u1) / u1];
    for (idx, lv) in levels.iter().enumerate() {
        let s = |v: T| scaled(v, lv.j - 1);
        let end = lv.v;
        let alpha_knots = alpha
            .knots()
            .iter()
            .map(|k| k.0)
            .filter(|&a| a > lv.u && end.is_none_or(|e| a < e));
        for a in std::iter::once(lv.u).chain(alpha_knots) {
            knots.push((a, s(at(alpha, a))));
            slopes.push(s(alpha.right_derivative(a)));
        }
        if let (Some(v), Some(m)) = (lv.v, lv.m) {
            let two_m = m * T::from_i64(2);
            if v == lv.u {
                let last = slopes.len() - 1;
                slopes[last] = two_m;
            } else {
                knots.push((v, s(at(alpha, v))));
                slopes.push(two_m);
            }
            debug_assert!(idx + 1 < levels.len());
        }
    }
    let gamma = PiecewiseConvex::from_parts(knots, slopes, alpha.domain_end())?;
    Ok(Gamma { gamma, levels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub holds: bool,
    pub checked: usize,
    pub first_violation: Option<(u32, f64)>,
}

/// Checks `α/2^j ≤ γ ≤ α/2^{j−1}` on every `[u_j, u_{j+1})`.
///
/// Both sides are piecewise linear, so the ratio is monotone between
/// consecutive knots of either function and checking at knots is exhaustive;
/// on the last level the tails are compared as well.
pub fn gamma_bracket<T: Real>(alpha: &PiecewiseConvex<T>, g: &Gamma<T>) -> BracketReport {
    let mut pts: Vec<T> = alpha
        .knots()
        .iter()
        .chain(g.gamma.knots())
        .map(|k| k.0)
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    pts.dedup();
    let mut report = BracketReport {
        holds: true,
        checked: 0,
        first_violation: None,
    };
    let mut fail = |j: u32, x: f64| {
        if report.first_violation.is_none() {
            report.first_violation = Some((j, x));
        }
        report.holds = false;
    };
    for (idx, lv) in g.levels.iter().enumerate() {
        let hi = g.levels.get(idx + 1).map(|n| n.u);
        for &p in pts.iter().filter(|&&p| p >= lv.u && hi.is_none_or(|h| p <= h)) {
            let (a, c) = (at(alpha, p), at(&g.gamma, p));
            report.checked += 1;
            if !(scaled(a, lv.j) <= c && c <= scaled(a, lv.j - 1)) {
                fail(lv.j, p.log2_f64());
            }
        }
        if hi.is_none() {
            let (a, c) = (alpha.tail_slope(), g.gamma.tail_slope());
            report.checked += 1;
            if !(scaled(a, lv.j) <= c && c <= scaled(a, lv.j - 1)) {
                fail(lv.j, f64::INFINITY);
            }
        }
    }
    report
}

/// Equivalence `c·α ≤ β ≤ C·α` on `[u_0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCertificate<T> {
    pub c: T,
    pub big_c: T,
    pub u0: T,
    pub holds: bool,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NFunctionReport {
    pub zero_at_zero: bool,
    pub increasing: bool,
    pub convex: bool,
    /// `φ(u)/u` decreases towards 0 on the quadratic head.
    pub small_at_zero: bool,
    /// Slopes beyond `u = 1` increase strictly.
    pub large_at_infinity: bool,
}

impl NFunctionReport {
    pub fn is_n_function(&self) -> bool {
        self.zero_at_zero && self.increasing && self.convex && self.small_at_zero && self.large_at_infinity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NFunction<T> {
    pub function: PiecewiseConvex<T>,
    pub report: NFunctionReport,
    pub equivalence: EquivalenceCertificate<T>,
}

/// Segments of the quadratic head on `[0, 1]`.
pub const HEAD_SEGMENTS: i64 = 64;

pub fn n_function_report<T: Real>(phi: &PiecewiseConvex<T>) -> NFunctionReport {
    let one = T::one();
    let head = T::from_ratio(1, HEAD_SEGMENTS);
    let beyond: Vec<T> = phi
        .knots()
        .iter()
        .zip(phi.slopes())
        .filter(|(k, _)| k.0 >= one)
        .map(|(_, &s)| s)
        .collect();
    let first_ratio = phi.eval(head).map(|v| v / head);
    let unit_ratio = phi.eval(one);
    NFunctionReport {
        zero_at_zero: phi.eval(T::zero()) == Some(T::zero()),
        increasing: phi.slopes().iter().all(|&s| s > T::zero()),
        convex: phi.is_convex(),
        small_at_zero: matches!((first_ratio, unit_ratio), (Some(a), Some(b)) if a < b),
        large_at_infinity: beyond.len() >= 2
            && beyond[..beyond.len() - 1].windows(2).all(|w| w[0] < w[1])
            && beyond[0] < beyond[beyond.len() - 1],
    }
}

fn pow2_below<T: Real>(x: T) -> T {
    let mut e = x.log2_f64().floor() as i64;
    while T::pow2(e).is_some_and(|p| p >= x) {
        e -= 1;
    }
    T::pow2(e).expect("in range")
}

fn pow2_above<T: Real>(x: T) -> T {
    let mut e = x.log2_f64().ceil() as i64;
    while T::pow2(e).is_some_and(|p| p <= x) {
        e += 1;
    }
    T::pow2(e).expect("in range")
}

/// N-function `α_ε`: `ε u²` on `[0, 1]` (piecewise linear, [`HEAD_SEGMENTS`]
/// segments), then `α(u) − α(1) + ε`.
///
/// The certificate uses `u_0 = 2`: `α_ε/α = 1 − (α(1) − ε)/α` is monotone,
/// so its range on `[u_0, ∞)` lies between its value at `u_0` and 1; `c` and
/// `C` are the powers of two just outside that range.
pub fn lemma4_nfunction<T: Real>(alpha: &PiecewiseConvex<T>, eps: T) -> Result<NFunction<T>> {
    let one = T::one();
    if eps <= T::zero() {
        return Err(Error::InvalidInput("ε must be positive".into()));
    }
    if alpha.domain_end().is_some_and(|e| e < T::from_i64(2)) {
        return Err(Error::InvalidInput("α must be finite on [0, 2]".into()));
    }
    let d1 = alpha.right_derivative(one);
    if T::from_i64(2) * eps > d1 {
        return Err(Error::JunctionBreaksConvexity(format!(
            "2ε = {:?} exceeds the right derivative {:?} at 1",
            T::from_i64(2) * eps,
            d1
        )));
    }
    let a1 = at(alpha, one);
    let mut knots = Vec::new();
    let mut slopes = Vec::new();
    for i in 0..HEAD_SEGMENTS {
        let u = T::from_ratio(i, HEAD_SEGMENTS);
        knots.push((u, eps * u * u));
        slopes.push(eps * T::from_ratio(2 * i + 1, HEAD_SEGMENTS));
    }
    knots.push((one, eps));
    slopes.push(d1);
    for (k, &s) in alpha.knots().iter().zip(alpha.slopes()) {
        if k.0 > one {
            knots.push((k.0, k.1 - a1 + eps));
            slopes.push(s);
        }
    }
    let function = PiecewiseConvex::from_parts(knots, slopes, alpha.domain_end())?;
    let report = n_function_report(&function);

    let u0 = T::from_i64(2);
    let r0 = at(&function, u0) / at(alpha, u0);
    let (lo, hi) = if r0 < one { (r0, one) } else { (one, r0) };
    let (c, big_c) = (pow2_below(lo), pow2_above(hi));
    let mut checked = 0;
    let mut holds = true;
    let pts = std::iter::once(u0).chain(alpha.knots().iter().map(|k| k.0).filter(|&u| u > u0));
    for u in pts {
        let (a, b) = (at(alpha, u), at(&function, u));
        checked += 1;
        holds &= c * a <= b && b <= big_c * a;
    }
    let (ta, tb) = (alpha.tail_slope(), function.tail_slope());
    holds &= c * ta <= tb && tb <= big_c * ta;
    Ok(NFunction {
        function,
        report,
        equivalence: EquivalenceCertificate {
            c,
            big_c,
            u0,
            holds,
            checked,
        },
    })
}

/// Legendre transform `ψ(v) = sup_u (uv − φ(u))` of a convex piecewise-linear
/// `φ` with `φ(0) = 0`.
///
/// On `[s_{i−1}, s_i]` the supremum sits at knot `a_i`. When `φ` has no
/// domain end, `ψ = +∞` beyond the terminal slope, which becomes the domain
/// end of `ψ`; otherwise `ψ` continues with slope equal to that end.
pub fn young_conjugate<T: Real>(phi: &PiecewiseConvex<T>) -> PiecewiseConvex<T> {
    let mut knots = vec![(T::zero(), T::zero())];
    let mut slopes = vec![T::zero()];
    let mut push = |v: T, value: T, slope: T| {
        if knots[knots.len() - 1].0 == v {
            let last = slopes.len() - 1;
            slopes[last] = slope;
        } else {
            knots.push((v, value));
            slopes.push(slope);
        }
    };
    let pk = phi.knots();
    let ps = phi.slopes();
    for i in 0..pk.len() - 1 {
        let (a, fa) = pk[i + 1];
        push(ps[i], a * ps[i] - fa, a);
    }
    let tail = phi.tail_slope();
    let domain_end = match phi.domain_end() {
        None => Some(tail),
        Some(b) => {
            let fb = at(phi, b);
            push(tail, b * tail - fb, b);
            None
        }
    };
    PiecewiseConvex {
        knots,
        slopes,
        domain_end,
    }
}

/// `∫ φ(|f|) = 2^{−N} Σ_j φ(|f_j|)`.
pub fn orlicz_integral<T: Real>(f: &StepFunction<T>, phi: &PiecewiseConvex<T>) -> Result<T> {
    let mut acc = T::zero();
    for &v in f.values() {
        acc = acc
            + phi.eval(v.abs_val()).ok_or_else(|| {
                Error::Overflow(format!("|f| = {v:?} beyond the growth function's domain"))
            })?;
    }
    Ok(acc * T::pow2(-(f.resolution() as i64)).expect("grid scale representable"))
}

/// Per-level bounds `2^{-j}`, `j = 1..=J`; their sum is below 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBudget<T> {
    pub terms: Vec<T>,
}

impl<T: Real> LevelBudget<T> {
    pub fn geometric(levels: usize) -> Self {
        LevelBudget {
            terms: (1..=levels as i64)
                .map(|j| T::pow2(-j).expect("budget term representable"))
                .collect(),
        }
    }

    pub fn total(&self) -> T {
        self.terms.iter().fold(T::zero(), |a, &t| a + t)
    }

    /// First level whose value exceeds its bound.
    pub fn first_excess(&self, values: &[T]) -> Option<usize> {
        values
            .iter()
            .zip(&self.terms)
            .position(|(v, t)| v > t)
            .map(|i| i + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{generate_sequence, SequenceKind};
    use crate::{ExpFloat, Rational};

    fn canonical(k: usize) -> Vec<SpectralNat> {
        generate_sequence(SequenceKind::NestedCanonical, k).unwrap()
    }

    fn q(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn single_knot_phi() {
        let phi: PiecewiseConvex<ExpFloat> = build_phi(&canonical(1), 1).unwrap();
        assert_eq!(phi.eval(ExpFloat::pow2(10)), Some(ExpFloat::from_f64(4096.0)));
        assert_eq!(phi.slopes()[0], ExpFloat::from_f64(4.0));
    }

    #[test]
    fn first_slopes() {
        let certs = slope_certificates(&canonical(2), 2).unwrap();
        assert_eq!((certs[0].base, certs[0].delta), (4, 0));
        assert_eq!((certs[1].base, certs[1].delta, certs[1].gap), (6, 2, 32));
        let t1: f64 = certs[1].value();
        assert!(t1 > 6.0 && t1 < 6.0 + 2f64.powi(-30));
        assert!(certs[0].less_than(&certs[1]));
        let r: Rational = certs[1].value();
        assert_eq!(r - Rational::from_integer(6), q(2, (1 << 32) - 1));
    }

    #[test]
    fn build_phi_rejects_bad_prefixes() {
        let flat = vec![SpectralNat::from_u64(5), SpectralNat::from_u64(7)];
        assert!(matches!(build_phi::<ExpFloat>(&flat, 2), Err(Error::NotNested)));
        let same_v = vec![SpectralNat::from_u64(1), SpectralNat::from_u64(3)];
        assert!(matches!(build_phi::<ExpFloat>(&same_v, 2), Err(Error::InvalidInput(_))));
        assert!(build_phi::<ExpFloat>(&canonical(3), 4).is_err());
    }

    #[test]
    fn phi_report_basic_cases() {
        let lin = PiecewiseConvex::linear(1.0f64);
        let r = check_phi_properties(&lin);
        assert!(r.convex && !r.superlinear_evidence);
        let bad = PiecewiseConvex::from_parts(vec![(0.0, 0.0), (1.0, 3.0)], vec![3.0, 1.0], None).unwrap();
        assert!(!check_phi_properties(&bad).convex);
        let phi: PiecewiseConvex<ExpFloat> = build_phi(&canonical(20), 20).unwrap();
        let r = check_phi_properties(&phi);
        assert!(r.convex && r.strictly_convex && r.superlinear_evidence);
        assert!(r.doubling_constant < 2.6);
    }

    #[test]
    fn doubling_at_the_first_knot() {
        let phi: PiecewiseConvex<ExpFloat> = build_phi(&canonical(3), 3).unwrap();
        let r = doubling_ratios(&phi);
        let (_, a, b) = r.iter().find(|(m, _, _)| *m == 10).unwrap();
        assert_eq!(*a, ExpFloat::from_f64(4096.0));
        assert!((b.to_f64() - 10240.0).abs() < 1e-6);
    }

    #[test]
    fn young_examples() {
        let psi = young_conjugate(&PiecewiseConvex::linear(q(1, 1)));
        assert_eq!(psi.eval(q(1, 2)), Some(q(0, 1)));
        assert_eq!(psi.eval(q(1, 1)), Some(q(0, 1)));
        assert_eq!(psi.eval(q(3, 2)), None);
        let phi = PiecewiseConvex::from_knots(vec![(q(0, 1), q(0, 1)), (q(2, 1), q(2, 1))], q(3, 1)).unwrap();
        let psi = young_conjugate(&phi);
        assert_eq!(psi.knots().iter().map(|k| k.0).collect::<Vec<_>>(), vec![q(0, 1), q(1, 1)]);
        assert_eq!(psi.domain_end(), Some(q(3, 1)));
        assert_eq!(psi.eval(q(2, 1)), Some(q(2, 1)));
        let back = young_conjugate(&psi);
        for i in 0..40 {
            let u = q(i, 7);
            assert_eq!(back.eval(u), phi.eval(u));
        }
    }

    #[test]
    fn lemma4_linear_example() {
        let alpha = PiecewiseConvex::linear(q(2, 1));
        let n = lemma4_nfunction(&alpha, q(1, 2)).unwrap();
        let f = &n.function;
        assert_eq!(f.eval(q(0, 1)), Some(q(0, 1)));
        assert_eq!(f.eval(q(1, 2)), Some(q(1, 8)));
        assert_eq!(f.eval(q(1, 1)), Some(q(1, 2)));
        assert_eq!(f.eval(q(3, 1)), Some(q(9, 2)));
        assert_eq!((n.equivalence.c, n.equivalence.big_c), (q(1, 2), q(2, 1)));
        assert!(n.equivalence.holds);
        assert!(matches!(
            lemma4_nfunction(&alpha, q(3, 2)),
            Err(Error::JunctionBreaksConvexity(_))
        ));
    }

    #[test]
    fn lemma3_canonical_and_scaled() {
        let alpha: PiecewiseConvex<ExpFloat> = build_phi(&canonical(8), 8).unwrap();
        let g = lemma3_gamma(&alpha, &PiecewiseConvex::linear(ExpFloat::from_f64(1.0))).unwrap();
        assert_eq!(g.levels[0].u, ExpFloat::pow2(10));
        assert!(gamma_bracket(&alpha, &g).holds);
        assert!(g.gamma.is_convex());
        let quarter = alpha.scale(ExpFloat::from_f64(0.25));
        let g = lemma3_gamma(&alpha, &quarter).unwrap();
        assert!(gamma_bracket(&alpha, &g).holds);
        assert!(g.gamma.is_convex());
        let lin = PiecewiseConvex::linear(ExpFloat::from_f64(1.0));
        assert!(lemma3_gamma(&lin, &lin).is_err());
    }

    #[test]
    fn integrals_and_budget() {
        let phi = PiecewiseConvex::linear(1.0f64);
        assert_eq!(orlicz_integral(&StepFunction::zero(3), &phi).unwrap(), 0.0);
        let b = LevelBudget::<f64>::geometric(4);
        assert_eq!(b.total(), 0.9375);
        assert_eq!(b.first_excess(&[0.5, 0.3]), Some(2));
    }
}
