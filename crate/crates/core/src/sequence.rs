//! Index sequences: the canonical generators and the spectrum classifier.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SpectralNat};

/// Largest magnitude (in bits) for which ratios are compared exactly.
const EXACT_RATIO_BITS: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    /// `n_k = Σ_{j=0}^{k} 4^j`.
    NestedCanonical,
    /// `n_k = 2^{k²} Σ_{j=0}^{k} 4^j`.
    SeparatedCanonical,
    /// `n_k = 2^k`.
    PowersOfTwo,
}

impl FromStr for SequenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nested-canonical" => Ok(SequenceKind::NestedCanonical),
            "separated-canonical" => Ok(SequenceKind::SeparatedCanonical),
            "powers-of-two" => Ok(SequenceKind::PowersOfTwo),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceKind::NestedCanonical => "nested-canonical",
            SequenceKind::SeparatedCanonical => "separated-canonical",
            SequenceKind::PowersOfTwo => "powers-of-two",
        })
    }
}

impl SequenceKind {
    /// Term with index `k`.
    pub fn term(self, k: u64) -> SpectralNat {
        match self {
            SequenceKind::NestedCanonical => SpectralNat::from_bits((0..=k).map(|j| 2 * j)),
            SequenceKind::SeparatedCanonical => {
                SpectralNat::from_bits((0..=k).map(|j| k * k + 2 * j))
            }
            SequenceKind::PowersOfTwo => SpectralNat::pow2(k),
        }
    }
}

/// First `count` terms, `k = 1, 2, …`.
pub fn generate_sequence(kind: SequenceKind, count: usize) -> Result<Vec<SpectralNat>> {
    generate_sequence_from(kind, 1, count)
}

/// `count` terms starting at index `start`. With `start = 0` the nested
/// canonical sequence begins `1, 5, 21, …`, which is still nested with
/// growing variation.
pub fn generate_sequence_from(kind: SequenceKind, start: u64, count: usize) -> Result<Vec<SpectralNat>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    Ok((start..start + count as u64).map(|k| kind.term(k)).collect())
}

/// Smallest observed `n_{k+1} / n_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LacunaryRatio {
    /// Index `k` (0-based) of the pair `(n_k, n_{k+1})` attaining the minimum.
    pub position: usize,
    pub numerator: SpectralNat,
    pub denominator: SpectralNat,
    pub approx: f64,
    /// `true` when the minimum was found by exact cross-multiplication.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub variation_profile: Vec<u64>,
    pub separated: bool,
    pub nested: bool,
    /// Variation strictly increases along the scanned prefix.
    pub unbounded_variation_evidence: bool,
    pub lacunary_ratio: LacunaryRatio,
    /// `sup_k |m_k - n_k|` against a comparison sequence, over the common prefix.
    pub close_bound: Option<SpectralNat>,
}

/// `max Sp(a) < min Sp(b)`.
pub fn separated_pair(a: &SpectralNat, b: &SpectralNat) -> bool {
    match (a.max_exp(), b.min_exp()) {
        (Some(hi), Some(lo)) => hi < lo,
        _ => true,
    }
}

/// `Sp(b) ∩ [0, max Sp(a)] = Sp(a)`.
pub fn nested_pair(a: &SpectralNat, b: &SpectralNat) -> bool {
    match a.max_exp() {
        None => true,
        Some(top) => b.truncate_below(top + 1) == *a,
    }
}

pub fn is_nested(seq: &[SpectralNat]) -> bool {
    seq.windows(2).all(|w| nested_pair(&w[0], &w[1]))
}

pub fn classify_sequence(seq: &[SpectralNat]) -> Result<SequenceReport> {
    classify_sequence_against(seq, None)
}

pub fn classify_sequence_against(
    seq: &[SpectralNat],
    comparison: Option<&[SpectralNat]>,
) -> Result<SequenceReport> {
    if seq.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: seq.len(),
        });
    }
    if let Some(i) = seq.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::NotIncreasing(i + 1));
    }
    let variation_profile: Vec<u64> = seq.iter().map(SpectralNat::variation).collect();
    let separated = seq.windows(2).all(|w| separated_pair(&w[0], &w[1]));
    let nested = is_nested(seq);
    let unbounded_variation_evidence = variation_profile.windows(2).all(|w| w[0] < w[1]);
    let lacunary_ratio = min_ratio(seq);
    let close_bound = comparison.map(|m| {
        m.iter()
            .zip(seq)
            .map(|(a, b)| a.abs_diff(b))
            .max()
            .unwrap_or_default()
    });
    Ok(SequenceReport {
        variation_profile,
        separated,
        nested,
        unbounded_variation_evidence,
        lacunary_ratio,
        close_bound,
    })
}

fn min_ratio(seq: &[SpectralNat]) -> LacunaryRatio {
    let big: Option<Vec<BigUint>> = seq.iter().map(|n| n.to_biguint(EXACT_RATIO_BITS)).collect();
    let (position, exact) = match big {
        Some(v) => {
            // n_{k+1}/n_k < n_{j+1}/n_j  ⇔  n_{k+1} n_j < n_{j+1} n_k
            let mut best = 0;
            for k in 1..v.len() - 1 {
                let lhs = &v[k + 1] * &v[best];
                let rhs = &v[best + 1] * &v[k];
                if lhs.cmp(&rhs) == Ordering::Less {
                    best = k;
                }
            }
            (best, true)
        }
        None => {
            let logs: Vec<f64> = seq.iter().map(SpectralNat::log2_approx).collect();
            let best = (0..seq.len() - 1)
                .min_by(|&a, &b| {
                    (logs[a + 1] - logs[a])
                        .partial_cmp(&(logs[b + 1] - logs[b]))
                        .unwrap_or(Ordering::Equal)
                })
                .unwrap_or(0);
            (best, false)
        }
    };
    let numerator = seq[position + 1].clone();
    let denominator = seq[position].clone();
    let approx = (numerator.log2_approx() - denominator.log2_approx()).exp2();
    LacunaryRatio {
        position,
        numerator,
        denominator,
        approx,
        exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nats(v: &[u64]) -> Vec<SpectralNat> {
        v.iter().map(|&x| SpectralNat::from_u64(x)).collect()
    }

    #[test]
    fn generator_examples() {
        assert_eq!(generate_sequence(SequenceKind::NestedCanonical, 3).unwrap(), nats(&[5, 21, 85]));
        assert_eq!(generate_sequence(SequenceKind::SeparatedCanonical, 2).unwrap(), nats(&[10, 336]));
        assert_eq!(generate_sequence(SequenceKind::PowersOfTwo, 3).unwrap(), nats(&[2, 4, 8]));
        assert!("fibonacci".parse::<SequenceKind>().is_err());
        assert!(generate_sequence(SequenceKind::PowersOfTwo, 0).is_err());
    }

    #[test]
    fn classify_examples() {
        let r = classify_sequence(&nats(&[5, 21, 85, 341])).unwrap();
        assert!(r.nested && !r.separated);
        assert_eq!(r.variation_profile, vec![4, 6, 8, 10]);
        assert!(r.unbounded_variation_evidence);

        let r = classify_sequence(&nats(&[10, 336, 43520])).unwrap();
        assert!(r.separated && !r.nested);

        let r = classify_sequence(&nats(&[2, 4, 8, 16])).unwrap();
        assert_eq!(r.variation_profile, vec![2, 2, 2, 2]);
        assert!(!r.nested && !r.unbounded_variation_evidence);
        assert_eq!(r.lacunary_ratio.approx, 2.0);
    }

    #[test]
    fn classify_errors() {
        assert_eq!(
            classify_sequence(&nats(&[5])),
            Err(Error::TooShort { needed: 2, got: 1 })
        );
        assert_eq!(classify_sequence(&nats(&[5, 5])), Err(Error::NotIncreasing(1)));
    }

    #[test]
    fn lacunary_ratio_is_exact_minimum() {
        let r = classify_sequence(&nats(&[3, 10, 25, 100])).unwrap();
        assert_eq!(r.lacunary_ratio.position, 1);
        assert!(r.lacunary_ratio.exact);
        assert!((r.lacunary_ratio.approx - 2.5).abs() < 1e-12);
    }

    #[test]
    fn closeness() {
        let r = classify_sequence_against(&nats(&[5, 21, 85]), Some(&nats(&[6, 19, 85]))).unwrap();
        assert_eq!(r.close_bound, Some(SpectralNat::from_u64(2)));
    }
}
