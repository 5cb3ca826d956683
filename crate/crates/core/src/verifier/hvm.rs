use std::sync::Arc;

use super::{require_content, HypothesisKind, Verdict, Verifier, VerifyError};
use crate::dictionary::PerturbationDictionary;
use crate::hvm::{predict_table, HvmError, HvmModel};
use crate::knowledge::FactList;

impl From<HvmError> for VerifyError {
    fn from(err: HvmError) -> Self {
        match err {
            HvmError::Untrained => VerifyError::Untrained,
            other => VerifyError::InvalidModel(other.to_string()),
        }
    }
}

/// `(1/|x|) * sum_x log P(supported | x, hypothesis)` from a local tabular model.
pub fn hvm_score(
    model: &HvmModel,
    dictionary: &PerturbationDictionary,
    facts: &FactList,
    hypothesis: &str,
    kind: HypothesisKind,
) -> Result<f64, VerifyError> {
    require_content(hypothesis)?;
    let cells = facts
        .iter()
        .map(|t| model.predict_cell(dictionary, t, hypothesis, kind))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Verdict::from_per_triple(cells).score)
}

/// Local tabular HVM as a [`Verifier`].
#[derive(Debug, Clone)]
pub struct HvmVerifier {
    model: Arc<HvmModel>,
    dictionary: Arc<PerturbationDictionary>,
}

impl HvmVerifier {
    pub fn new(model: Arc<HvmModel>, dictionary: Arc<PerturbationDictionary>) -> Result<Self, VerifyError> {
        model.check()?;
        Ok(Self { model, dictionary })
    }

    pub fn model(&self) -> &HvmModel {
        &self.model
    }
}

impl Verifier for HvmVerifier {
    fn verify(&self, facts: &FactList, hypothesis: &str, kind: HypothesisKind) -> Result<Verdict, VerifyError> {
        require_content(hypothesis)?;
        let cells = facts
            .iter()
            .map(|t| self.model.predict_cell(&self.dictionary, t, hypothesis, kind))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Verdict::from_per_triple(cells))
    }

    fn verify_pair(
        &self,
        facts: &FactList,
        backward: Option<&str>,
        forward: Option<&str>,
    ) -> Result<(Option<Verdict>, Option<Verdict>), VerifyError> {
        let (Some(b), Some(f)) = (backward, forward) else {
            let b = backward
                .map(|h| self.verify(facts, h, HypothesisKind::Backward))
                .transpose()?;
            let f = forward
                .map(|h| self.verify(facts, h, HypothesisKind::Forward))
                .transpose()?;
            return Ok((b, f));
        };
        require_content(b)?;
        require_content(f)?;
        let table = predict_table(&self.model, &self.dictionary, facts.triples(), b, f)?;
        Ok((
            Some(Verdict::from_per_triple(table.column(HypothesisKind::Backward))),
            Some(Verdict::from_per_triple(table.column(HypothesisKind::Forward))),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hvm::FEATURE_DIM;
    use crate::knowledge::FactTriple;

    #[test]
    fn score_is_mean_log_of_cells() {
        let facts = FactList::new(vec![
            FactTriple::new("a", "r", "b").unwrap(),
            FactTriple::new("c", "q", "d").unwrap(),
        ])
        .unwrap();
        let dict = PerturbationDictionary::new();
        let mut w = vec![0.0; FEATURE_DIM];
        w[0] = 3.0;
        w[8] = -1.0;
        let model = HvmModel::from_weights(w).unwrap();
        let score = hvm_score(&model, &dict, &facts, "a b", HypothesisKind::Backward).unwrap();
        let p1 = model.predict_cell(&dict, &facts.triples()[0], "a b", HypothesisKind::Backward).unwrap();
        let p2 = model.predict_cell(&dict, &facts.triples()[1], "a b", HypothesisKind::Backward).unwrap();
        assert!((score - (p1.ln() + p2.ln()) / 2.0).abs() < 1e-12);
        // exp(score) is the geometric mean of supported cells.
        assert!((score.exp() - (p1 * p2).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pair_matches_single_calls() {
        let facts = FactList::new(vec![FactTriple::new("a", "r", "b").unwrap()]).unwrap();
        let dict = Arc::new(PerturbationDictionary::new());
        let w: Vec<f64> = (0..FEATURE_DIM).map(|i| i as f64 * 0.1 - 0.3).collect();
        let v = HvmVerifier::new(Arc::new(HvmModel::from_weights(w).unwrap()), dict).unwrap();
        let (b, f) = v.verify_pair(&facts, Some("a r"), Some("b")).unwrap();
        assert_eq!(b.unwrap(), v.verify(&facts, "a r", HypothesisKind::Backward).unwrap());
        assert_eq!(f.unwrap(), v.verify(&facts, "b", HypothesisKind::Forward).unwrap());
    }

    #[test]
    fn untrained_rejected() {
        let err = HvmVerifier::new(Arc::new(HvmModel::untrained()), Arc::new(PerturbationDictionary::new()));
        assert!(matches!(err, Err(VerifyError::Untrained)));
    }
}
