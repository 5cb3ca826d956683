use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{featurize, sigmoid, FeatureVector, HvmError, HvmModel, TrainingMeta, FEATURE_DIM};
use crate::dictionary::PerturbationDictionary;
use crate::fate::HypothesisPair;
use crate::verifier::HypothesisKind;

/// Loss increase tolerated before an epoch counts toward divergence. An
/// epoch counts when its loss rose since the previous epoch or sits above
/// the loss at initialization.
const LOSS_TOLERANCE: f64 = 1e-9;
const DIVERGENCE_PATIENCE: usize = 3;
const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 2.0,
            seed: 17,
        }
    }
}

/// Featurized cells with 0/1 targets (1 = supported), one group per pair.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    instances: Vec<Vec<(FeatureVector, f64)>>,
}

impl PreparedBatch {
    pub fn new(pairs: &[HypothesisPair], dictionary: &PerturbationDictionary) -> Result<Self, HvmError> {
        if pairs.is_empty() {
            return Err(HvmError::EmptyBatch);
        }
        let mut instances = Vec::with_capacity(pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            if pair.labels.len() != pair.triples.len() || pair.triples.is_empty() {
                return Err(HvmError::MissingLabel {
                    pair: i,
                    expected: pair.triples.len(),
                    found: pair.labels.len(),
                });
            }
            let mut cells = Vec::with_capacity(2 * pair.triples.len());
            for (triple, labels) in pair.triples.iter().zip(&pair.labels) {
                for (col, (hyp, kind)) in [
                    (&pair.backward, HypothesisKind::Backward),
                    (&pair.forward, HypothesisKind::Forward),
                ]
                .into_iter()
                .enumerate()
                {
                    let target = if labels[col] { 1.0 } else { 0.0 };
                    cells.push((featurize(triple, hyp, kind, dictionary), target));
                }
            }
            instances.push(cells);
        }
        Ok(Self { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Table loss and its gradient with respect to the weights.
///
/// Per cell, `-log P(label)` is `softplus(-z)` for supported and
/// `softplus(z)` for unsupported; `d/dz = sigmoid(z) - target`.
pub fn loss_and_gradient(weights: &[f64], batch: &PreparedBatch) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; FEATURE_DIM];
    let n = batch.instances.len() as f64;
    for cells in &batch.instances {
        let scale = 1.0 / (cells.len() as f64 * n);
        for (features, target) in cells {
            let z: f64 = weights.iter().zip(features.values()).map(|(w, x)| w * x).sum();
            let nll = if *target > 0.5 { softplus(-z) } else { softplus(z) };
            loss += scale * nll;
            let dz = sigmoid(z) - target;
            for (g, x) in grad.iter_mut().zip(features.values()) {
                *g += scale * dz * x;
            }
        }
    }
    (loss, grad)
}

pub fn table_loss(
    model: &HvmModel,
    pairs: &[HypothesisPair],
    dictionary: &PerturbationDictionary,
) -> Result<f64, HvmError> {
    model.check()?;
    let batch = PreparedBatch::new(pairs, dictionary)?;
    Ok(loss_and_gradient(model.weights(), &batch).0)
}

/// Full-batch gradient descent on the table loss.
pub fn train_hvm(
    pairs: &[HypothesisPair],
    dictionary: &PerturbationDictionary,
    config: TrainConfig,
) -> Result<HvmModel, HvmError> {
    if config.epochs == 0 {
        return Err(HvmError::NoEpochs);
    }
    let batch = PreparedBatch::new(pairs, dictionary)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..FEATURE_DIM)
        .map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE))
        .collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut rising = 0;
    for epoch in 0..config.epochs {
        let (loss, grad) = loss_and_gradient(&weights, &batch);
        if let (Some(first), Some(prev)) = (history.first(), history.last()) {
            let worse = loss > prev + LOSS_TOLERANCE || loss > first + LOSS_TOLERANCE;
            if !loss.is_finite() || worse {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        history.push(loss);
        if rising >= DIVERGENCE_PATIENCE {
            let recent = history[history.len().saturating_sub(DIVERGENCE_PATIENCE + 1)..].to_vec();
            return Err(HvmError::Diverged { epoch, recent });
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
    }
    let final_loss = loss_and_gradient(&weights, &batch).0;
    Ok(HvmModel::trained(
        weights,
        TrainingMeta {
            seed: config.seed,
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            final_loss,
            loss_history: history,
        },
    ))
}

/// Fraction of cells whose thresholded prediction matches the label.
pub fn cell_accuracy(
    model: &HvmModel,
    pairs: &[HypothesisPair],
    dictionary: &PerturbationDictionary,
) -> Result<f64, HvmError> {
    model.check()?;
    let batch = PreparedBatch::new(pairs, dictionary)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for cells in &batch.instances {
        for (features, target) in cells {
            let predicted = if sigmoid(model.logit(features)) >= 0.5 { 1.0 } else { 0.0 };
            correct += usize::from(predicted == *target);
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}
