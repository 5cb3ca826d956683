//! The adversarial toy setup used by the faithfulness experiments: a world,
//! an n-gram LM trained to prefer perturbed descriptions, and an HVM
//! trained on a separate world.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fate::{FateError, SplitPolicy};
use crate::hvm::{train_hvm, HvmError, HvmModel, TrainConfig};
use crate::lm::{LmError, ToyLm};
use crate::verifier::{HvmVerifier, NliVerifier, OracleNli, RuleOracle, VerifyError};
use crate::world::{adversarial_lm, generate_world, synthesize, World, WorldConfig};

/// Offset between an experiment's seed and the seed of its HVM training world.
pub const HVM_WORLD_OFFSET: u64 = 1000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Fate(#[from] FateError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Hvm(#[from] HvmError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instances: usize,
    /// Perturbed copies per faithful description in the LM corpus.
    pub bias: usize,
    pub order: usize,
    pub smoothing: f64,
    pub hvm_instances: usize,
    pub hvm_splits: usize,
    pub hvm_training: TrainConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            bias: 2,
            order: 5,
            smoothing: 1e-12,
            hvm_instances: 300,
            hvm_splits: 4,
            hvm_training: TrainConfig::default(),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

pub struct Experiment {
    pub world: World,
    pub lm: ToyLm,
    pub hvm: Arc<HvmModel>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let world = generate_world(&WorldConfig {
            instances: config.instances,
            seed: config.seed,
            ..WorldConfig::default()
        });
        let lm = adversarial_lm(&world, config.bias, config.order, config.smoothing, config.seed)?;
        let hvm_seed = config.seed + HVM_WORLD_OFFSET;
        let train_world = generate_world(&WorldConfig {
            instances: config.hvm_instances,
            seed: hvm_seed,
            ..WorldConfig::default()
        });
        let fate = synthesize(&train_world, SplitPolicy::Random(config.hvm_splits), hvm_seed)?;
        let hvm = train_hvm(&fate.pairs, &fate.dictionary, config.hvm_training)?;
        Ok(Self {
            world,
            lm,
            hvm: Arc::new(hvm),
        })
    }

    /// Rule oracle over this world's dictionary; the hallucination metric.
    pub fn oracle(&self) -> RuleOracle {
        RuleOracle::new(self.world.dictionary.clone())
    }

    pub fn hvm_verifier(&self) -> Result<HvmVerifier, ExperimentError> {
        Ok(HvmVerifier::new(self.hvm.clone(), Arc::new(self.world.dictionary.clone()))?)
    }

    /// NLI adapter answered by the rule oracle.
    pub fn nli_verifier(&self) -> NliVerifier<OracleNli> {
        NliVerifier::new(OracleNli::new(Arc::new(self.oracle())))
    }
}
