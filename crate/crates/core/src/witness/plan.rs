//! Level planning for the truncated witness `f*_J = Σ_{j≤J} (M_j / V_j) Q_j`
//! and relocation of auxiliary polynomials into the flat gaps.
//!
//! Level `j` uses `M_j = j` and the budget `2^{−j}`. Its cost is
//! `(M_j / V) φ(2^{2n}) / 2^{2n}`: since `0 ≤ Q ≤ 2^{2n}` and `∫Q = 1`,
//! convexity bounds `∫ φ(c Q)` by `φ(c 2^{2n}) / 2^{2n}`.
//!
//! After level `j` ends at the anchor `N_ν(j)` the next two terms are
//! `n_α(j) < n_β(j)`; level `j + 1` starts at or after `β(j)` and keeps all
//! non-constant frequencies at or above `n_β(j)`, so `[n_α(j), n_β(j)]` is
//! flat for `f*_J`.

use serde::{Deserialize, Serialize};

use super::lemma1::{build_lemma1_with_floor, Lemma1Artifact, Lemma1Config, PointEval};
use super::Check;
use crate::orlicz::{build_phi, LevelBudget, PiecewiseConvex};
use crate::walsh::{walsh_eval, WalshCoefficients};
use crate::{DyadicPoint, Error, ExpFloat, Real, Result, Scalar, SpectralNat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanConfig {
    /// Truncation horizon `J`.
    pub horizon: usize,
    /// Knots of `φ_(n_k)` used for the growth comparison.
    pub evidence_knots: usize,
    pub lemma1: Lemma1Config,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            horizon: 2,
            evidence_knots: 6,
            lemma1: Lemma1Config::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanLevel {
    pub j: usize,
    pub m_j: u64,
    /// 1-based position of `n_ν(j)` in the prefix.
    pub nu: usize,
    pub n_nu: SpectralNat,
    pub variation: u64,
    pub term: ExpFloat,
    pub budget: ExpFloat,
    /// Lower bound imposed on `δ_1`.
    pub floor: SpectralNat,
    pub degree: SpectralNat,
    /// Position and value of `N_ν(j) = min {n_k ≥ deg Q}`.
    pub anchor: (usize, SpectralNat),
    pub alpha: usize,
    pub beta: usize,
    pub n_alpha: SpectralNat,
    pub n_beta: SpectralNat,
}

impl PlanLevel {
    /// `M_j / V(n_ν(j))`.
    pub fn weight<T: Real>(&self) -> T {
        T::from_ratio(self.m_j as i64, self.variation as i64)
    }

    /// `(M_j / V)(V / 16 − 1)`.
    pub fn threshold<T: Real>(&self) -> T {
        self.weight::<T>() * (T::from_ratio(self.variation as i64, 16) - T::one())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPlan {
    pub levels: Vec<PlanLevel>,
    pub budget: LevelBudget<ExpFloat>,
    pub phi: PiecewiseConvex<ExpFloat>,
    /// `log2 (φ / φ_(n_k))` at the knots `2^{2 n_k}`.
    pub growth_evidence: Vec<f64>,
}

impl WitnessPlan {
    pub fn total_term(&self) -> ExpFloat {
        self.levels.iter().fold(ExpFloat::ZERO, |a, l| a + l.term)
    }

    /// Digits needed for every character of every level to be resolved.
    pub fn sample_resolution(&self) -> u32 {
        self.levels
            .iter()
            .filter_map(|l| l.degree.max_exp())
            .max()
            .map_or(1, |t| t as u32 + 1)
    }
}

/// A plan with the built polynomial of every level.
#[derive(Clone, Debug)]
pub struct PlannedWitness {
    pub plan: WitnessPlan,
    pub artifacts: Vec<Lemma1Artifact>,
}

fn growth_evidence(seq: &[SpectralNat], phi: &PiecewiseConvex<ExpFloat>, knots: usize) -> Result<Vec<f64>> {
    let knots = knots.min(seq.len());
    if knots < 2 {
        return Err(Error::TooShort { needed: 2, got: knots });
    }
    let reference: PiecewiseConvex<ExpFloat> = build_phi(seq, knots)?;
    let mut out = Vec::with_capacity(knots);
    for &(u, v) in &reference.knots()[1..] {
        let p = phi
            .eval(u)
            .ok_or_else(|| Error::InvalidInput(format!("φ undefined at {u}")))?;
        out.push(p.log2() - v.log2());
    }
    let decreasing = out.windows(2).all(|w| w[1] <= w[0]) && out[out.len() - 1] < out[0];
    if !decreasing {
        return Err(Error::NotDominated(format!(
            "log2 φ/φ_(n_k) at the knots is {out:?}"
        )));
    }
    Ok(out)
}

fn level_term(phi: &PiecewiseConvex<ExpFloat>, j: usize, n: &SpectralNat) -> Result<ExpFloat> {
    let e = n
        .to_u64()
        .filter(|&v| v < 1 << 61)
        .ok_or_else(|| Error::Overflow(format!("2^(2n) for n = {n}")))? as i64
        * 2;
    let u = ExpFloat::pow2(e);
    let p = phi
        .eval(u)
        .ok_or_else(|| Error::InvalidInput(format!("φ undefined at 2^{e}")))?;
    let weight = ExpFloat::from_ratio(j as i64, n.variation() as i64);
    Ok(weight * p.scale_pow2(-e))
}

/// Greedy plan of `J` levels over a nested prefix.
pub fn plan_levels(
    seq: &[SpectralNat],
    phi: &PiecewiseConvex<ExpFloat>,
    config: &PlanConfig,
) -> Result<PlannedWitness> {
    if config.horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let growth = growth_evidence(seq, phi, config.evidence_knots)?;
    let budget = LevelBudget::<ExpFloat>::geometric(config.horizon);
    let mut levels: Vec<PlanLevel> = Vec::new();
    let mut artifacts = Vec::new();
    let mut start = 1;
    let mut floor = SpectralNat::zero();
    for j in 1..=config.horizon {
        let exhausted = |reason: String| Error::PlanExhausted { level: j, reason };
        let limit = budget.terms[j - 1];
        let mut pos = start;
        let (nu, term) = loop {
            let n = seq
                .get(pos - 1)
                .ok_or_else(|| exhausted(format!("no position from {start} meets the budget")))?;
            let t = level_term(phi, j, n)?;
            if t <= limit {
                break (pos, t);
            }
            pos += 1;
        };
        let art = build_lemma1_with_floor(seq, nu, &floor, &config.lemma1).map_err(|e| match e {
            Error::PrefixTooShort(r) => exhausted(r),
            other => other,
        })?;
        let anchor = art
            .anchor
            .clone()
            .ok_or_else(|| exhausted(format!("prefix ends below deg Q = {}", art.degree)))?;
        let (alpha, beta) = (anchor.0 + 1, anchor.0 + 2);
        if beta > seq.len() {
            return Err(exhausted(format!("need two terms after N_ν = {}", anchor.1)));
        }
        let level = PlanLevel {
            j,
            m_j: j as u64,
            nu,
            n_nu: art.n_nu.clone(),
            variation: art.variation,
            term,
            budget: limit,
            floor: floor.clone(),
            degree: art.degree.clone(),
            anchor,
            alpha,
            beta,
            n_alpha: seq[alpha - 1].clone(),
            n_beta: seq[beta - 1].clone(),
        };
        start = beta;
        floor = level.n_beta.clone();
        levels.push(level);
        artifacts.push(art);
    }
    Ok(PlannedWitness {
        plan: WitnessPlan {
            levels,
            budget,
            phi: phi.clone(),
            growth_evidence: growth,
        },
        artifacts,
    })
}

/// Best designated cut of one level at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelValue<T> {
    pub level: usize,
    /// Factor index `j` of the designated cut inside the level.
    pub factor: usize,
    pub cut: SpectralNat,
    /// `|S_cut(f*_J) − S_base(f*_J)|`, with base `1` at level 1 and
    /// `n_β(j−1)` above.
    pub value: T,
    /// `max |S_cut(f*_J)|` over the level's designated cuts.
    pub raw: T,
    pub threshold: T,
    /// The point lies in the level's exceptional set.
    pub in_e: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSample<T> {
    pub levels: Vec<LevelValue<T>>,
    /// Largest `value` over all levels.
    pub sup: T,
    /// `S_{n_β(j)}(f*_J) − S_{n_α(j)}(f*_J)` per level.
    pub flat: Vec<T>,
}

struct Evaluator<'a> {
    planned: &'a PlannedWitness,
    points: Vec<PointEval<'a>>,
}

impl<'a> Evaluator<'a> {
    fn new(planned: &'a PlannedWitness, x: &DyadicPoint) -> Self {
        let points = planned.artifacts.iter().map(|a| PointEval::new(a, x)).collect();
        Evaluator { planned, points }
    }

    /// `S_m(f*_J)(x)`.
    fn partial_sum<T: Real>(&self, m: &SpectralNat) -> Result<T> {
        let mut acc = T::zero();
        for (l, pe) in self.planned.plan.levels.iter().zip(&self.points) {
            acc = acc + l.weight::<T>() * pe.partial_sum::<T>(m)?;
        }
        Ok(acc)
    }

    /// `S_cut(f*_J)(x)` at the designated cut of factor `f` of level `idx`;
    /// the level's own contribution comes straight from the cut identity.
    fn designated_sum<T: Real>(&self, idx: usize, f: usize, cut: &SpectralNat) -> Result<T> {
        let mut acc = T::zero();
        for (i, (l, pe)) in self.planned.plan.levels.iter().zip(&self.points).enumerate() {
            let s = if i == idx {
                pe.designated_value::<T>(f)?
            } else {
                pe.partial_sum::<T>(cut)?
            };
            acc = acc + l.weight::<T>() * s;
        }
        Ok(acc)
    }
}

/// Designated-cut lower bound for the oscillation of `f*_J` at `x`, with the
/// flat-segment certificate of every level.
pub fn witness_sup<T: Real>(planned: &PlannedWitness, x: &DyadicPoint) -> Result<WitnessSample<T>> {
    let ev = Evaluator::new(planned, x);
    let levels_plan = &planned.plan.levels;
    let mut levels = Vec::with_capacity(levels_plan.len());
    let mut flat = Vec::with_capacity(levels_plan.len());
    let mut sup = T::zero();
    for (idx, (level, art)) in levels_plan.iter().zip(&planned.artifacts).enumerate() {
        let base = if idx == 0 {
            SpectralNat::from_u64(1)
        } else {
            levels_plan[idx - 1].n_beta.clone()
        };
        let s_base: T = ev.partial_sum(&base)?;
        let mut best: Option<(usize, SpectralNat, T)> = None;
        let mut raw = T::zero();
        for (f, pair) in art.cut_pairs.iter().enumerate() {
            let s: T = ev.designated_sum(idx, f + 1, pair.designated())?;
            let v = (s - s_base).abs_val();
            if best.as_ref().is_none_or(|b| v > b.2) {
                best = Some((f + 1, pair.designated().clone(), v));
            }
            if s.abs_val() > raw {
                raw = s.abs_val();
            }
        }
        let (factor, cut, value) = best.expect("every level has factors");
        let in_e = ev.points[idx].witness::<T>()?.is_some();
        let threshold = level.threshold::<T>();
        let d: T = ev.partial_sum::<T>(&level.n_beta)? - ev.partial_sum::<T>(&level.n_alpha)?;
        if !d.is_zero() {
            return Err(Error::invariant(
                "eq27",
                format!("S_{{n_β}} − S_{{n_α}} = {d:?} at level {}", level.j),
            ));
        }
        flat.push(d);
        if value > sup {
            sup = value;
        }
        levels.push(LevelValue {
            level: level.j,
            factor,
            cut,
            value,
            raw,
            threshold,
            in_e,
            pass: !in_e || value >= threshold,
        });
    }
    Ok(WitnessSample { levels, sup, flat })
}

/// Walsh polynomial stored as `(index, coefficient)` pairs, indices increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsePolynomial<T> {
    pub terms: Vec<(SpectralNat, T)>,
}

impl<T: Scalar> SparsePolynomial<T> {
    pub fn from_coefficients(q: &WalshCoefficients<T>) -> Self {
        SparsePolynomial {
            terms: q
                .coeffs()
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(k, &c)| (SpectralNat::from_u64(k as u64), c))
                .collect(),
        }
    }

    pub fn degree(&self) -> Option<&SpectralNat> {
        self.terms.last().map(|t| &t.0)
    }

    pub fn eval(&self, x: &DyadicPoint) -> T {
        self.terms.iter().fold(T::zero(), |acc, (k, c)| {
            if walsh_eval(k, x) > 0 {
                acc + *c
            } else {
                acc - *c
            }
        })
    }

    /// `S_m`: the terms with index below `m`.
    pub fn partial_sum(&self, m: &SpectralNat) -> Self {
        SparsePolynomial {
            terms: self.terms.iter().filter(|t| t.0 < *m).cloned().collect(),
        }
    }

    /// Whether some index lies in `[lo, hi)`; `hi = None` is unbounded.
    pub fn has_index_in(&self, lo: &SpectralNat, hi: Option<&SpectralNat>) -> bool {
        self.terms.iter().any(|t| t.0 >= *lo && hi.is_none_or(|h| t.0 < *h))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relocation<T> {
    pub r: usize,
    pub level: usize,
    pub delta: SpectralNat,
    pub poly: SparsePolynomial<T>,
    pub checks: Vec<Check>,
}

/// Smallest level `j ≥ min(max(r, 1), J)` with `deg Q_r < n_α(j)`.
pub fn relocation_level(plan: &WitnessPlan, r: usize, degree: &SpectralNat) -> Result<usize> {
    let from = r.clamp(1, plan.levels.len());
    plan.levels[from - 1..]
        .iter()
        .find(|l| *degree < l.n_alpha)
        .map(|l| l.j)
        .ok_or_else(|| {
            Error::DegreeExceedsAnchor(format!(
                "deg Q_{r} = {degree} is not below n_α of any level from {from}"
            ))
        })
}

/// `Q*_r = w_{δ(r)} Q_r` with `δ(r) = n_β(j(r)) − n_α(j(r))`.
pub fn spectral_relocate<T: Scalar>(
    q: &WalshCoefficients<T>,
    plan: &WitnessPlan,
    r: usize,
) -> Result<Relocation<T>> {
    let source = SparsePolynomial::from_coefficients(q);
    let degree = source.degree().cloned().unwrap_or_default();
    let level = relocation_level(plan, r, &degree)?;
    let l = &plan.levels[level - 1];
    let delta = l.n_beta.nested_diff(&l.n_alpha)?;
    let mut index_ok = true;
    let terms: Vec<(SpectralNat, T)> = source
        .terms
        .iter()
        .map(|(h, c)| {
            let sum = delta.add(h);
            index_ok &= delta.xor(h) == sum;
            (sum, *c)
        })
        .collect();
    let poly = SparsePolynomial { terms };
    let inside = poly.terms.iter().all(|t| t.0 > l.n_alpha && t.0 <= l.n_beta);
    let below_beta = poly.partial_sum(&l.n_beta) == poly;
    let below_alpha = poly.partial_sum(&l.n_alpha).terms.is_empty();
    let checks = vec![
        Check::new("eq31", inside, format!("Sp(Q*) ⊂ ({}, {}]", l.n_alpha, l.n_beta)),
        Check::new(
            "eq32",
            index_ok && below_beta,
            format!("δ ⊕ h = δ + h and S_{{n_β}}(Q*) = w_δ Q with δ = {delta}"),
        ),
        Check::new("eq33", below_alpha, "S_{n_α}(Q*) = 0"),
    ];
    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        return Err(Error::invariant(&bad.tag, bad.detail.clone()));
    }
    Ok(Relocation {
        r,
        level,
        delta,
        poly,
        checks,
    })
}

/// `|Q*_r(x)| = |Q_r(x)|` at every sample.
pub fn modulus_check<T: Scalar>(q: &WalshCoefficients<T>, rel: &Relocation<T>, xs: &[DyadicPoint]) -> Check {
    let source = SparsePolynomial::from_coefficients(q);
    let tol = if T::is_exact() { 0.0 } else { 1e-9 };
    let bad = xs.iter().position(|x| {
        let (a, b) = (source.eval(x).abs_val(), rel.poly.eval(x).abs_val());
        if T::is_exact() {
            a != b
        } else {
            (a.to_f64() - b.to_f64()).abs() > tol * a.to_f64().abs().max(1.0)
        }
    });
    Check::new(
        "modulus",
        bad.is_none(),
        match bad {
            None => format!("|Q*| = |Q| at {} points", xs.len()),
            Some(i) => format!("moduli differ at sample {i}"),
        },
    )
}

/// Flatness of the relocated sum on `[n_β(j), N_ν(j+1)]`: no index of any
/// component falls in `[n_β(j), N_ν(j+1))` (unbounded above for the top level).
pub fn flat_after<T: Scalar>(relocs: &[Relocation<T>], plan: &WitnessPlan, j: usize) -> Result<Check> {
    let l = plan
        .levels
        .get(j.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidInput(format!("level {j} outside the plan")))?;
    let hi = plan.levels.get(j).map(|next| &next.anchor.1);
    let hit = relocs.iter().find(|rel| rel.poly.has_index_in(&l.n_beta, hi));
    Ok(Check::new(
        "eq35",
        hit.is_none(),
        match (hit, hi) {
            (Some(rel), _) => format!("Q*_{} has an index in the window after level {j}", rel.r),
            (None, Some(_)) => format!("no index in [n_β({j}), N_ν({}))", j + 1),
            (None, None) => format!("no index at or above n_β({j})"),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{generate_sequence_from, SequenceKind};
    use crate::Rational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prefix(count: usize) -> Vec<SpectralNat> {
        generate_sequence_from(SequenceKind::NestedCanonical, 0, count).unwrap()
    }

    fn identity() -> PiecewiseConvex<ExpFloat> {
        PiecewiseConvex::linear(ExpFloat::from_f64(1.0))
    }

    fn n(v: u64) -> SpectralNat {
        SpectralNat::from_u64(v)
    }

    #[test]
    fn single_level_plan() {
        let config = PlanConfig {
            horizon: 1,
            ..PlanConfig::default()
        };
        let p = plan_levels(&prefix(12), &identity(), &config).unwrap();
        let l = &p.plan.levels[0];
        assert_eq!((l.nu, l.n_nu.clone(), l.variation), (1, n(1), 2));
        assert_eq!(l.term.to_f64(), 0.5);
        assert_eq!(l.degree, n(20));
        assert_eq!(l.anchor, (3, n(21)));
        assert_eq!((l.n_alpha.clone(), l.n_beta.clone()), (n(85), n(341)));
        let art = &p.artifacts[0];
        let q = art.q_dense.as_ref().unwrap();
        assert_eq!(q.coeffs.spectrum().collect::<Vec<_>>(), vec![0, 4, 16, 20]);
        assert!(p.plan.total_term() <= ExpFloat::from_f64(1.0));
    }

    #[test]
    fn short_prefix_reports_level() {
        let config = PlanConfig {
            horizon: 2,
            ..PlanConfig::default()
        };
        let err = plan_levels(&prefix(40), &identity(), &config).unwrap_err();
        assert!(matches!(err, Error::PlanExhausted { level: 2, .. }), "{err:?}");
    }

    #[test]
    fn superlinear_phi_is_rejected() {
        let seq = prefix(12);
        let phi: PiecewiseConvex<ExpFloat> = build_phi(&seq, 8).unwrap();
        let fast = phi.scale(ExpFloat::from_f64(1.0));
        assert!(matches!(
            plan_levels(&seq, &fast, &PlanConfig::default()),
            Err(Error::NotDominated(_))
        ));
    }

    #[test]
    fn two_level_plan_is_flat() {
        let p = plan_levels(&prefix(600), &identity(), &PlanConfig::default()).unwrap();
        let (a, b) = (&p.plan.levels[0], &p.plan.levels[1]);
        assert_eq!((b.nu, b.n_nu.clone()), (5, n(341)));
        assert_eq!(p.artifacts[1].deltas[0].delta, n(1024));
        assert!(b.floor == a.n_beta && b.n_alpha > b.anchor.1);
        assert!((b.term.to_f64() - 0.2).abs() < 1e-12);
        let res = p.plan.sample_resolution();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let x = DyadicPoint::random(res, &mut rng);
            let s = witness_sup::<ExpFloat>(&p, &x).unwrap();
            assert!(s.flat.iter().all(|d| d.is_zero()));
            assert!(s.levels.iter().all(|l| l.pass));
            let one = witness_sup::<Rational>(&p, &x);
            if let Ok(one) = one {
                assert!(one.levels[0].pass);
            }
        }
    }

    #[test]
    fn relocating_a_constant() {
        let config = PlanConfig {
            horizon: 1,
            ..PlanConfig::default()
        };
        let p = plan_levels(&prefix(12), &identity(), &config).unwrap();
        let q = WalshCoefficients::new(0, vec![Rational::from_integer(1)]).unwrap();
        let rel = spectral_relocate(&q, &p.plan, 1).unwrap();
        assert_eq!(rel.delta, n(256));
        assert_eq!(rel.poly.terms, vec![(n(256), Rational::from_integer(1))]);
        assert!(rel.checks.iter().all(Check::passed));

        let coeffs: Vec<Rational> = (0..64).map(|k| Rational::new(k % 5 - 2, 3)).collect();
        let q = WalshCoefficients::new(6, coeffs).unwrap();
        let rel = spectral_relocate(&q, &p.plan, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<DyadicPoint> = (0..100).map(|_| DyadicPoint::random(12, &mut rng)).collect();
        assert!(modulus_check(&q, &rel, &xs).passed());
        assert!(flat_after(&[rel], &p.plan, 1).unwrap().passed());

        let big = WalshCoefficients::new(7, vec![Rational::from_integer(1); 128]).unwrap();
        assert!(matches!(spectral_relocate(&big, &p.plan, 1), Err(Error::DegreeExceedsAnchor(_))));
    }
}
