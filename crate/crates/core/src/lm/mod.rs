//! Autoregressive language-model interface `p(y_t | y_<t, x)`.
//!
//! Models are conditioned on the facts by way of their linearization; the
//! built-in [`ToyLm`] hashes it into a bucket, [`RemoteLm`] ships it over the
//! bridge wire protocol.

mod remote;
mod toy;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::knowledge::FactList;
use crate::protocol::BridgeError;

pub use remote::RemoteLm;
pub use toy::ToyLm;

pub type TokenId = u32;

/// Tolerance on `sum(exp(logprobs)) == 1` for locally computed vectors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

#[derive(Debug, Error)]
pub enum LmError {
    #[error("prefix must start with bos")]
    MissingBos,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: TokenId, size: usize },
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("sequence must end with eos")]
    MissingEos,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("transport failure: {0}")]
    Transport(#[source] std::io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl From<BridgeError> for LmError {
    fn from(err: BridgeError) -> Self {
        match err {
            BridgeError::Transport(e) => LmError::Transport(e),
            BridgeError::Protocol(m) => LmError::Protocol(m),
            BridgeError::Remote(m) => LmError::Protocol(format!("server rejected request: {m}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos_id: TokenId,
    eos_id: TokenId,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    bos_id: TokenId,
    eos_id: TokenId,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = LmError;

    fn try_from(repr: VocabularyRepr) -> Result<Self, LmError> {
        Vocabulary::new(repr.tokens, repr.bos_id, repr.eos_id)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            bos_id: v.bos_id,
            eos_id: v.eos_id,
        }
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, bos_id: TokenId, eos_id: TokenId) -> Result<Self, LmError> {
        if bos_id == eos_id {
            return Err(LmError::InvalidVocabulary("bos and eos share an id".into()));
        }
        for id in [bos_id, eos_id] {
            if id as usize >= tokens.len() {
                return Err(LmError::TokenOutOfRange {
                    id,
                    size: tokens.len(),
                });
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(LmError::InvalidVocabulary(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self {
            tokens,
            index,
            bos_id,
            eos_id,
        })
    }

    /// Layout: eos, bos, then the distinct words in sorted order.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: Vec<&str> = words
            .into_iter()
            .filter(|w| *w != BOS && *w != EOS)
            .collect();
        set.sort_unstable();
        set.dedup();
        let tokens = [EOS, BOS]
            .into_iter()
            .chain(set)
            .map(str::to_owned)
            .collect();
        Vocabulary::new(tokens, 1, 0).expect("sorted deduplicated words form a valid vocabulary")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos_id
    }

    pub fn eos(&self) -> TokenId {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace-tokenizes `text` into ids (no bos/eos added).
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        text.split_whitespace()
            .map(|w| self.id(w).ok_or_else(|| LmError::UnknownToken(w.to_owned())))
            .collect()
    }

    /// Renders content tokens; bos and eos are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id != self.bos_id && id != self.eos_id)
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                hasher.update(b"\n");
            }
            hasher.update(tok.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn check_id(&self, id: TokenId) -> Result<(), LmError> {
        if (id as usize) < self.tokens.len() {
            Ok(())
        } else {
            Err(LmError::TokenOutOfRange {
                id,
                size: self.tokens.len(),
            })
        }
    }

    pub fn check_prefix(&self, prefix: &[TokenId]) -> Result<(), LmError> {
        if prefix.first() != Some(&self.bos_id) {
            return Err(LmError::MissingBos);
        }
        prefix.iter().try_for_each(|&id| self.check_id(id))
    }
}

/// Full-vocabulary next-token log distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbVector(Vec<f64>);

impl LogProbVector {
    /// Validates normalization within `tolerance` and non-positivity.
    pub fn new(values: Vec<f64>, tolerance: f64) -> Result<Self, String> {
        if values.is_empty() {
            return Err("empty distribution".into());
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v > tolerance) {
            return Err(format!("log-probability {v} is not <= 0"));
        }
        let mass = exp_sum(&values);
        if (mass - 1.0).abs() > tolerance {
            return Err(format!("probabilities sum to {mass}"));
        }
        Ok(Self(values.into_iter().map(|v| v.min(0.0)).collect()))
    }

    /// For callers that construct distributions normalized by construction.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn one_hot(size: usize, id: TokenId) -> Self {
        let mut values = vec![f64::NEG_INFINITY; size];
        values[id as usize] = 0.0;
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.0[id as usize]
    }

    /// Highest log-probability; the lowest id wins ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, v) in self.0.iter().enumerate() {
            if *v > self.0[best] {
                best = i;
            }
        }
        best as TokenId
    }

    pub fn exp_sum(&self) -> f64 {
        exp_sum(&self.0)
    }
}

fn exp_sum(values: &[f64]) -> f64 {
    values.iter().map(|v| v.exp()).sum()
}

pub trait LanguageModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// `log p(. | prefix, facts)`; `prefix` starts with bos.
    fn next_logprobs(&self, prefix: &[TokenId], facts: &FactList) -> Result<LogProbVector, LmError>;

    /// Argmax of [`next_logprobs`](Self::next_logprobs), lowest id on ties.
    fn greedy_next(&self, prefix: &[TokenId], facts: &FactList) -> Result<TokenId, LmError> {
        Ok(self.next_logprobs(prefix, facts)?.argmax())
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_logprobs(&self, prefix: &[TokenId], facts: &FactList) -> Result<LogProbVector, LmError> {
        (**self).next_logprobs(prefix, facts)
    }

    fn greedy_next(&self, prefix: &[TokenId], facts: &FactList) -> Result<TokenId, LmError> {
        (**self).greedy_next(prefix, facts)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_logprobs(&self, prefix: &[TokenId], facts: &FactList) -> Result<LogProbVector, LmError> {
        (**self).next_logprobs(prefix, facts)
    }

    fn greedy_next(&self, prefix: &[TokenId], facts: &FactList) -> Result<TokenId, LmError> {
        (**self).greedy_next(prefix, facts)
    }
}

/// `sum_t log p(y_t | y_<t, x)` over a bos..eos sequence.
pub fn sequence_logprob(
    model: &dyn LanguageModel,
    tokens: &[TokenId],
    facts: &FactList,
) -> Result<f64, LmError> {
    let vocab = model.vocabulary();
    vocab.check_prefix(tokens)?;
    if tokens.last() != Some(&vocab.eos()) || tokens.len() < 2 {
        return Err(LmError::MissingEos);
    }
    let mut total = 0.0;
    for t in 1..tokens.len() {
        total += model.next_logprobs(&tokens[..t], facts)?.get(tokens[t]);
    }
    Ok(total)
}

/// 64-bit FNV-1a, used wherever a stable, platform-independent hash is needed.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
