use std::collections::HashMap;
use std::sync::Arc;

use super::{require_content, HypothesisKind, Verdict, Verifier, VerifyError};
use crate::dictionary::PerturbationDictionary;
use crate::knowledge::{FactList, FactTriple};
use crate::surface::{contains_form, normalized, normalized_field, touches_form};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Supported,
    Unsupported,
}

/// Deterministic surface-match verifier for synthesized corpora.
///
/// A hypothesis is unsupported by a triple iff it touches (shares a token
/// window with) a registered replacement form of one of the triple's fields
/// and does not contain that field's original form.
#[derive(Debug, Clone)]
pub struct RuleOracle {
    dictionary: PerturbationDictionary,
    by_plain: HashMap<String, FactTriple>,
}

impl RuleOracle {
    pub fn new(dictionary: PerturbationDictionary) -> Self {
        let by_plain = dictionary
            .triples()
            .map(|t| (t.plain(), t.clone()))
            .collect();
        Self { dictionary, by_plain }
    }

    pub fn dictionary(&self) -> &PerturbationDictionary {
        &self.dictionary
    }

    /// Looks up a registered triple by its `subj rel obj` rendering.
    pub fn triple_for_plain(&self, plain: &str) -> Option<&FactTriple> {
        self.by_plain.get(plain)
    }

    pub fn verify(&self, triple: &FactTriple, hypothesis: &str) -> Result<Support, VerifyError> {
        let perturbations = self
            .dictionary
            .get(triple)
            .ok_or_else(|| VerifyError::UnregisteredTriple(triple.clone()))?;
        let hyp = normalized(hypothesis);
        let contradicted = perturbations.iter().any(|p| {
            touches_form(&hyp, &normalized_field(&p.replacement, p.position))
                && !contains_form(&hyp, &normalized_field(&p.original, p.position))
        });
        Ok(if contradicted {
            Support::Unsupported
        } else {
            Support::Supported
        })
    }

    /// Any triple of `facts` unsupported by `text`.
    pub fn any_unsupported(&self, facts: &FactList, text: &str) -> Result<bool, VerifyError> {
        for triple in facts {
            if self.verify(triple, text)? == Support::Unsupported {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Free-function form of [`RuleOracle::verify`].
pub fn rule_oracle_verify(
    oracle: &RuleOracle,
    triple: &FactTriple,
    hypothesis: &str,
) -> Result<Support, VerifyError> {
    oracle.verify(triple, hypothesis)
}

/// Wraps the rule oracle as a [`Verifier`] emitting per-triple probabilities
/// `confidence` (supported) or `1 - confidence` (unsupported).
#[derive(Debug, Clone)]
pub struct OracleVerifier {
    oracle: Arc<RuleOracle>,
    confidence: f64,
}

impl OracleVerifier {
    pub const DEFAULT_CONFIDENCE: f64 = 0.95;

    pub fn new(oracle: Arc<RuleOracle>) -> Self {
        Self::with_confidence(oracle, Self::DEFAULT_CONFIDENCE)
    }

    pub fn with_confidence(oracle: Arc<RuleOracle>, confidence: f64) -> Self {
        assert!(
            (0.5..=1.0).contains(&confidence),
            "confidence must lie in [0.5, 1]"
        );
        Self { oracle, confidence }
    }
}

impl Verifier for OracleVerifier {
    fn verify(&self, facts: &FactList, hypothesis: &str, _kind: HypothesisKind) -> Result<Verdict, VerifyError> {
        require_content(hypothesis)?;
        let cells = facts
            .iter()
            .map(|t| {
                self.oracle.verify(t, hypothesis).map(|s| match s {
                    Support::Supported => self.confidence,
                    Support::Unsupported => 1.0 - self.confidence,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Verdict::from_per_triple(cells))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Perturbation;
    use crate::knowledge::Position;

    fn dublin_oracle() -> (RuleOracle, FactTriple) {
        let t = FactTriple::new("Ireland", "largest_city", "Dublin").unwrap();
        let mut dict = PerturbationDictionary::new();
        dict.record(
            &t,
            Perturbation {
                position: Position::Relation,
                original: "largest_city".into(),
                replacement: "national_capital".into(),
            },
        );
        (RuleOracle::new(dict), t)
    }

    #[test]
    fn dublin_rows() {
        let (oracle, t) = dublin_oracle();
        assert_eq!(oracle.verify(&t, "Dublin is Ireland's largest").unwrap(), Support::Supported);
        assert_eq!(oracle.verify(&t, "largest city.").unwrap(), Support::Supported);
        assert_eq!(oracle.verify(&t, "Dublin is Ireland's national").unwrap(), Support::Unsupported);
        assert_eq!(oracle.verify(&t, "national capital.").unwrap(), Support::Unsupported);
        assert_eq!(oracle.verify(&t, "").unwrap(), Support::Supported);
    }

    #[test]
    fn original_form_rescues() {
        let (oracle, t) = dublin_oracle();
        assert_eq!(
            oracle.verify(&t, "its largest city and national capital").unwrap(),
            Support::Supported
        );
    }

    #[test]
    fn unregistered_triple_errors() {
        let (oracle, _) = dublin_oracle();
        let other = FactTriple::new("a", "b", "c").unwrap();
        assert!(matches!(oracle.verify(&other, "x"), Err(VerifyError::UnregisteredTriple(_))));
    }

    #[test]
    fn verifier_cells() {
        let (oracle, t) = dublin_oracle();
        let v = OracleVerifier::new(Arc::new(oracle));
        let facts = FactList::new(vec![t]).unwrap();
        let good = v.verify(&facts, "Dublin is Ireland's largest", HypothesisKind::Backward).unwrap();
        let bad = v.verify(&facts, "national capital", HypothesisKind::Forward).unwrap();
        assert_eq!(good.per_triple.as_deref(), Some(&[0.95][..]));
        assert!(bad.score < good.score);
        assert!(bad.is_negative() && !good.is_negative());
        assert!(matches!(v.verify(&facts, "  ", HypothesisKind::Forward), Err(VerifyError::EmptyHypothesis)));
    }
}
