//! Faithfulness-aware decoding for knowledge-to-text generation.
//!
//! At every decoding step each beam candidate is scored by its generator
//! log-likelihood plus a weighted faithfulness term: how well the text
//! generated so far (the backward hypothesis) and its greedy continuation
//! (the forward hypothesis) are supported by the input fact triples.
//!
//! The crate contains:
//!
//! - [`knowledge`]: fact triples, linearization, corpus I/O
//! - [`lm`]: the language-model interface, a fact-conditioned n-gram toy
//!   model, and a remote client
//! - [`decoder`]: greedy, beam and lookahead-verified beam search
//! - [`verifier`]: hypothesis verifiers (NLI adapter, tabular HVM, rule oracle)
//! - [`fate`]: synthesis of perturbed fact/description pairs and labeled
//!   backward/forward hypotheses
//! - [`hvm`]: a featurized per-triple verifier trained with a table-form loss
//! - [`eval`]: BLEU, oracle hallucination rate, sweeps and reports
//! - [`world`]: toy corpora with reserved perturbation vocabularies
//! - [`experiment`]: the adversarial LM + HVM setup built on a world
//! - [`cli`]: the `tweak` command line
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod decoder;
pub mod dictionary;
pub mod eval;
pub mod experiment;
pub mod fate;
pub mod hvm;
pub mod knowledge;
pub mod lm;
pub mod protocol;
pub mod surface;
pub mod verifier;
pub mod world;

pub use decoder::{decode, DecodeConfig, DecodeOutput, Strategy};
pub use dictionary::{Perturbation, PerturbationDictionary};
pub use knowledge::{linearize, FactList, FactTriple, K2TInstance, Position};
pub use lm::{LanguageModel, ToyLm, Vocabulary};
pub use verifier::{Verdict, Verifier};
