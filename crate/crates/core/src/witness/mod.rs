//! Divergence polynomials and the truncated multi-level witness.
//!
//! [`lemma1`] builds the factored polynomial `Q = Π_j (1 + w_{δ_j} g_j)`
//! for one level, evaluates its designated partial sums pointwise and
//! measures its exceptional set exactly. [`plan`] chains levels into a
//! truncated witness and relocates auxiliary polynomials into the gaps
//! between levels.

use serde::{Deserialize, Serialize};

pub mod lemma1;
pub mod plan;

pub use lemma1::*;
pub use plan::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Unverified,
}

/// Outcome of one named verification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub tag: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn new(tag: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            tag: tag.into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail: detail.into(),
        }
    }

    pub fn unverified(tag: &str, detail: impl Into<String>) -> Self {
        Check {
            tag: tag.into(),
            verdict: Verdict::Unverified,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}
