use std::sync::Arc;

use super::{require_content, HypothesisKind, RuleOracle, Support, Verdict, Verifier, VerifyError};
use crate::knowledge::FactList;

/// Anything that returns an entailment probability for (premise, hypothesis).
/// Neutral and contradiction mass are not used.
pub trait NliScorer: Send + Sync {
    fn entail_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, VerifyError>;
}

impl<T: NliScorer + ?Sized> NliScorer for Arc<T> {
    fn entail_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, VerifyError> {
        (**self).entail_prob(premise, hypothesis)
    }
}

/// Triples rendered as `subj rel obj`, joined with `"; "`.
pub fn nli_premise(facts: &FactList) -> String {
    facts
        .iter()
        .map(|t| t.plain())
        .collect::<Vec<_>>()
        .join("; ")
}

/// `log P(entailment | premise(facts), hypothesis)`.
pub fn nli_adapter_score(scorer: &dyn NliScorer, facts: &FactList, hypothesis: &str) -> Result<f64, VerifyError> {
    require_content(hypothesis)?;
    let p = scorer.entail_prob(&nli_premise(facts), hypothesis)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(VerifyError::BadProbability(p));
    }
    Ok(super::ln_prob(p))
}

/// Verifier that treats the concatenated facts as a single NLI premise.
pub struct NliVerifier<S> {
    scorer: S,
}

impl<S: NliScorer> NliVerifier<S> {
    pub fn new(scorer: S) -> Self {
        Self { scorer }
    }
}

impl<S: NliScorer> Verifier for NliVerifier<S> {
    fn verify(&self, facts: &FactList, hypothesis: &str, _kind: HypothesisKind) -> Result<Verdict, VerifyError> {
        let score = nli_adapter_score(&self.scorer, facts, hypothesis)?;
        Ok(Verdict {
            score,
            per_triple: None,
        })
    }
}

/// NLI stand-in backed by the rule oracle. It sees only the joined premise,
/// so it answers for the whole fact list at once: `supported_prob` when no
/// triple is contradicted, `unsupported_prob` otherwise.
#[derive(Debug, Clone)]
pub struct OracleNli {
    oracle: Arc<RuleOracle>,
    supported_prob: f64,
    unsupported_prob: f64,
}

impl OracleNli {
    pub fn new(oracle: Arc<RuleOracle>) -> Self {
        Self {
            oracle,
            supported_prob: 0.95,
            unsupported_prob: 0.05,
        }
    }

    pub fn with_probabilities(mut self, supported: f64, unsupported: f64) -> Self {
        self.supported_prob = supported;
        self.unsupported_prob = unsupported;
        self
    }
}

impl NliScorer for OracleNli {
    fn entail_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, VerifyError> {
        for part in premise.split("; ") {
            let triple = self
                .oracle
                .triple_for_plain(part)
                .ok_or_else(|| VerifyError::InvalidPremise(part.to_owned()))?;
            if self.oracle.verify(triple, hypothesis)? == Support::Unsupported {
                return Ok(self.unsupported_prob);
            }
        }
        Ok(self.supported_prob)
    }
}
