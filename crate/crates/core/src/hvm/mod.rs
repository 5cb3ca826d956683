//! Tabular hypothesis verification model.
//!
//! Every (triple, hypothesis) cell gets a fixed feature vector and a linear
//! logit; `sigmoid(logit)` is the probability that the hypothesis is
//! supported by the triple. Training minimizes the table-form loss: the
//! negative log-likelihood of every cell label, averaged over the `2 * |x|`
//! cells of an instance and then over instances.

mod features;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::PerturbationDictionary;
use crate::knowledge::FactTriple;
use crate::verifier::{HypothesisKind, VerificationTable};

pub use features::{featurize, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use train::{
    cell_accuracy, loss_and_gradient, table_loss, train_hvm, PreparedBatch, TrainConfig,
};

#[derive(Debug, Error)]
pub enum HvmError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("pair {pair}: expected {expected} label rows, found {found}")]
    MissingLabel {
        pair: usize,
        expected: usize,
        found: usize,
    },
    #[error("model is untrained")]
    Untrained,
    #[error("model has {found} weights, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("epochs must be >= 1")]
    NoEpochs,
    #[error("training diverged at epoch {epoch}: recent losses {recent:?}")]
    Diverged { epoch: usize, recent: Vec<f64> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub final_loss: f64,
    /// Loss at the start of each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvmModel {
    weights: Vec<f64>,
    #[serde(default)]
    training: Option<TrainingMeta>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    feature_names: Vec<String>,
    #[serde(flatten)]
    model: HvmModel,
}

const FORMAT: &str = "tweak-hvm/1";

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl HvmModel {
    /// A model with no weights; every prediction fails with [`HvmError::Untrained`].
    pub fn untrained() -> Self {
        Self {
            weights: Vec::new(),
            training: None,
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self, HvmError> {
        if weights.len() != FEATURE_DIM {
            return Err(HvmError::Dimension {
                expected: FEATURE_DIM,
                found: weights.len(),
            });
        }
        Ok(Self {
            weights,
            training: None,
        })
    }

    pub(crate) fn trained(weights: Vec<f64>, meta: TrainingMeta) -> Self {
        Self {
            weights,
            training: Some(meta),
        }
    }

    pub fn zeros() -> Self {
        Self::from_weights(vec![0.0; FEATURE_DIM]).expect("dimension matches")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn training(&self) -> Option<&TrainingMeta> {
        self.training.as_ref()
    }

    pub fn check(&self) -> Result<(), HvmError> {
        if self.weights.is_empty() {
            return Err(HvmError::Untrained);
        }
        if self.weights.len() != FEATURE_DIM {
            return Err(HvmError::Dimension {
                expected: FEATURE_DIM,
                found: self.weights.len(),
            });
        }
        Ok(())
    }

    pub fn logit(&self, features: &FeatureVector) -> f64 {
        self.weights
            .iter()
            .zip(features.values())
            .map(|(w, x)| w * x)
            .sum()
    }

    /// Supported-probability of one cell.
    pub fn predict_cell(
        &self,
        dictionary: &PerturbationDictionary,
        triple: &FactTriple,
        hypothesis: &str,
        kind: HypothesisKind,
    ) -> Result<f64, HvmError> {
        self.check()?;
        Ok(sigmoid(self.logit(&featurize(triple, hypothesis, kind, dictionary))))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: FORMAT.into(),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HvmError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| HvmError::Format(e.to_string()))?;
        if file.format != FORMAT {
            return Err(HvmError::Format(format!("unsupported format `{}`", file.format)));
        }
        if file.feature_names != FEATURE_NAMES {
            return Err(HvmError::Format("feature layout differs from this build".into()));
        }
        file.model.check()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), HvmError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HvmError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Cell `(j, c)` is the supported-probability of triple `j` against the
/// backward (`c = 0`) or forward (`c = 1`) hypothesis.
pub fn predict_table(
    model: &HvmModel,
    dictionary: &PerturbationDictionary,
    triples: &[FactTriple],
    backward: &str,
    forward: &str,
) -> Result<VerificationTable, HvmError> {
    model.check()?;
    let rows = triples
        .iter()
        .map(|t| {
            [
                sigmoid(model.logit(&featurize(t, backward, HypothesisKind::Backward, dictionary))),
                sigmoid(model.logit(&featurize(t, forward, HypothesisKind::Forward, dictionary))),
            ]
        })
        .collect();
    Ok(VerificationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple() -> FactTriple {
        FactTriple::new("Ireland", "largest_city", "Dublin").unwrap()
    }

    #[test]
    fn zero_model_predicts_half() {
        let dict = PerturbationDictionary::new();
        let t = predict_table(&HvmModel::zeros(), &dict, &[triple(), triple()], "a b", "c").unwrap();
        assert_eq!(t.rows, vec![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn single_triple_shape() {
        let dict = PerturbationDictionary::new();
        let t = predict_table(&HvmModel::zeros(), &dict, &[triple()], "a", "b").unwrap();
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn untrained_and_bad_dimension() {
        let dict = PerturbationDictionary::new();
        assert!(matches!(
            predict_table(&HvmModel::untrained(), &dict, &[triple()], "a", "b"),
            Err(HvmError::Untrained)
        ));
        assert!(matches!(HvmModel::from_weights(vec![1.0]), Err(HvmError::Dimension { .. })));
    }

    #[test]
    fn save_load_bit_identical() {
        let w: Vec<f64> = (0..FEATURE_DIM).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let model = HvmModel::from_weights(w).unwrap();
        let back = HvmModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let dict = PerturbationDictionary::new();
        let a = predict_table(&model, &dict, &[triple()], "Dublin is", "largest city").unwrap();
        let b = predict_table(&back, &dict, &[triple()], "Dublin is", "largest city").unwrap();
        assert_eq!(a.rows[0][0].to_bits(), b.rows[0][0].to_bits());
        assert_eq!(a.rows[0][1].to_bits(), b.rows[0][1].to_bits());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }
}
