//! Hypothesis verification `h(x, y)`: how well a (possibly partial) text is
//! supported by the input facts, on a log-probability scale (`<= 0`).

mod hvm;
mod nli;
mod oracle;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{FactList, FactTriple};
use crate::protocol::BridgeError;

pub use hvm::{hvm_score, HvmVerifier};
pub use nli::{nli_adapter_score, nli_premise, NliScorer, NliVerifier, OracleNli};
pub use oracle::{rule_oracle_verify, OracleVerifier, RuleOracle, Support};
pub use remote::{RemoteHvm, RemoteNli};

/// Per-triple probability below which a cell counts as a negative prediction.
pub const NEGATIVE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("hypothesis is empty")]
    EmptyHypothesis,
    #[error("triple {0} is not registered with the oracle")]
    UnregisteredTriple(FactTriple),
    #[error("hvm model is untrained")]
    Untrained,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("premise not understood: {0}")]
    InvalidPremise(String),
    #[error("scorer returned {0}, expected a probability in [0, 1]")]
    BadProbability(f64),
    #[error("transport failure: {0}")]
    Transport(#[source] std::io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl From<BridgeError> for VerifyError {
    fn from(err: BridgeError) -> Self {
        match err {
            BridgeError::Transport(e) => VerifyError::Transport(e),
            BridgeError::Protocol(m) => VerifyError::Protocol(m),
            BridgeError::Remote(m) => VerifyError::Protocol(format!("server rejected request: {m}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisKind {
    Backward,
    Forward,
}

impl fmt::Display for HypothesisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HypothesisKind::Backward => "backward",
            HypothesisKind::Forward => "forward",
        })
    }
}

/// Natural log with the probability floored at the smallest positive normal,
/// so verdict scores stay finite.
pub fn ln_prob(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_triple: Option<Vec<f64>>,
}

impl Verdict {
    pub fn from_probability(p: f64) -> Self {
        Self {
            score: ln_prob(p),
            per_triple: None,
        }
    }

    /// Score is the mean log of the per-triple supported probabilities.
    pub fn from_per_triple(probs: Vec<f64>) -> Self {
        let score = probs.iter().map(|p| ln_prob(*p)).sum::<f64>() / probs.len().max(1) as f64;
        Self {
            score,
            per_triple: Some(probs),
        }
    }

    /// Verdict for a hypothesis with no content: nothing is claimed.
    pub fn vacuous() -> Self {
        Self {
            score: 0.0,
            per_triple: None,
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.per_triple {
            Some(cells) => cells.iter().any(|p| *p < NEGATIVE_THRESHOLD),
            None => self.score < NEGATIVE_THRESHOLD.ln(),
        }
    }
}

/// Backward/forward supported-probabilities, one row per triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationTable {
    pub rows: Vec<[f64; 2]>,
}

impl VerificationTable {
    pub fn column(&self, kind: HypothesisKind) -> Vec<f64> {
        let c = match kind {
            HypothesisKind::Backward => 0,
            HypothesisKind::Forward => 1,
        };
        self.rows.iter().map(|r| r[c]).collect()
    }
}

pub trait Verifier: Send + Sync {
    fn verify(&self, facts: &FactList, hypothesis: &str, kind: HypothesisKind) -> Result<Verdict, VerifyError>;

    /// Scores a backward and a forward hypothesis together. Implementations
    /// that produce both columns in one pass (a verification table) override it.
    fn verify_pair(
        &self,
        facts: &FactList,
        backward: Option<&str>,
        forward: Option<&str>,
    ) -> Result<(Option<Verdict>, Option<Verdict>), VerifyError> {
        let b = backward
            .map(|h| self.verify(facts, h, HypothesisKind::Backward))
            .transpose()?;
        let f = forward
            .map(|h| self.verify(facts, h, HypothesisKind::Forward))
            .transpose()?;
        Ok((b, f))
    }
}

impl<T: Verifier + ?Sized> Verifier for &T {
    fn verify(&self, facts: &FactList, hypothesis: &str, kind: HypothesisKind) -> Result<Verdict, VerifyError> {
        (**self).verify(facts, hypothesis, kind)
    }

    fn verify_pair(
        &self,
        facts: &FactList,
        backward: Option<&str>,
        forward: Option<&str>,
    ) -> Result<(Option<Verdict>, Option<Verdict>), VerifyError> {
        (**self).verify_pair(facts, backward, forward)
    }
}

impl<T: Verifier + ?Sized> Verifier for Box<T> {
    fn verify(&self, facts: &FactList, hypothesis: &str, kind: HypothesisKind) -> Result<Verdict, VerifyError> {
        (**self).verify(facts, hypothesis, kind)
    }

    fn verify_pair(
        &self,
        facts: &FactList,
        backward: Option<&str>,
        forward: Option<&str>,
    ) -> Result<(Option<Verdict>, Option<Verdict>), VerifyError> {
        (**self).verify_pair(facts, backward, forward)
    }
}

pub(crate) fn require_content(hypothesis: &str) -> Result<(), VerifyError> {
    if hypothesis.trim().is_empty() {
        Err(VerifyError::EmptyHypothesis)
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_triple_score_is_mean_log() {
        let v = Verdict::from_per_triple(vec![1.0, (-2.0f64).exp()]);
        assert!((v.score - -1.0).abs() < 1e-12);
        assert!(v.is_negative());
        let v = Verdict::from_per_triple(vec![1.0, 1.0]);
        assert_eq!(v.score, 0.0);
        assert!(!v.is_negative());
    }

    #[test]
    fn probability_verdicts() {
        assert_eq!(Verdict::from_probability(1.0).score, 0.0);
        assert!((Verdict::from_probability((-1.0f64).exp()).score + 1.0).abs() < 1e-12);
        assert!(Verdict::from_probability(0.0).score.is_finite());
        assert!(Verdict::from_probability(0.4).is_negative());
        assert!(!Verdict::from_probability(0.6).is_negative());
    }
}
