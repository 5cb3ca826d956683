use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fnv1a, LanguageModel, LmError, LogProbVector, TokenId, Vocabulary};
use crate::knowledge::FactList;

/// Default number of fact buckets; large enough that distinct fact lists in
/// a toy corpus practically never share one.
pub const DEFAULT_BUCKETS: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ContextKey {
    bucket: u64,
    context: Vec<TokenId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    counts: Vec<(TokenId, u64)>,
}

/// Fact-conditioned n-gram model with add-constant smoothing.
///
/// Counts are keyed by `(hash(linearize(facts)) mod buckets, last n-1 tokens)`.
/// A context never seen in training yields the uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    buckets: u64,
    table: HashMap<ContextKey, ContextCounts>,
}

#[derive(Serialize, Deserialize)]
struct ToyLmFile {
    format: String,
    vocabulary: Vocabulary,
    order: usize,
    smoothing: f64,
    buckets: u64,
    contexts: Vec<ContextEntry>,
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    bucket: u64,
    context: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

const FORMAT: &str = "tweak-toy-lm/1";

impl ToyLm {
    /// Trains on `(facts, description)` pairs. Duplicate pairs add weight.
    pub fn train(corpus: &[(FactList, String)], order: usize, smoothing: f64) -> Result<Self, LmError> {
        Self::train_with_buckets(corpus, order, smoothing, DEFAULT_BUCKETS)
    }

    pub fn train_with_buckets(
        corpus: &[(FactList, String)],
        order: usize,
        smoothing: f64,
        buckets: u64,
    ) -> Result<Self, LmError> {
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        if order == 0 {
            return Err(LmError::InvalidModel("order must be >= 1".into()));
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(LmError::InvalidModel(format!("smoothing {smoothing} must be finite and >= 0")));
        }
        if buckets == 0 {
            return Err(LmError::InvalidModel("bucket count must be >= 1".into()));
        }
        let vocab = Vocabulary::from_words(corpus.iter().flat_map(|(_, d)| d.split_whitespace()));
        let mut raw: HashMap<ContextKey, HashMap<TokenId, u64>> = HashMap::new();
        for (facts, description) in corpus {
            let bucket = bucket_of(facts, buckets);
            let mut seq = vec![vocab.bos()];
            seq.extend(vocab.encode(description)?);
            seq.push(vocab.eos());
            for t in 1..seq.len() {
                let key = ContextKey {
                    bucket,
                    context: context_of(&seq[..t], order, vocab.bos()),
                };
                *raw.entry(key).or_default().entry(seq[t]).or_default() += 1;
            }
        }
        let table = raw
            .into_iter()
            .map(|(key, counts)| {
                let mut counts: Vec<_> = counts.into_iter().collect();
                counts.sort_unstable();
                let total = counts.iter().map(|(_, c)| c).sum();
                (key, ContextCounts { total, counts })
            })
            .collect();
        Ok(Self {
            vocab,
            order,
            smoothing,
            buckets,
            table,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    fn lookup(&self, prefix: &[TokenId], facts: &FactList) -> Option<&ContextCounts> {
        let key = ContextKey {
            bucket: bucket_of(facts, self.buckets),
            context: context_of(prefix, self.order, self.vocab.bos()),
        };
        self.table.get(&key).filter(|c| c.total > 0)
    }

    pub fn to_json(&self) -> String {
        let mut contexts: Vec<ContextEntry> = self
            .table
            .iter()
            .map(|(k, v)| ContextEntry {
                bucket: k.bucket,
                context: k.context.clone(),
                counts: v.counts.clone(),
            })
            .collect();
        contexts.sort_by(|a, b| (a.bucket, &a.context).cmp(&(b.bucket, &b.context)));
        let file = ToyLmFile {
            format: FORMAT.into(),
            vocabulary: self.vocab.clone(),
            order: self.order,
            smoothing: self.smoothing,
            buckets: self.buckets,
            contexts,
        };
        serde_json::to_string(&file).expect("toy model always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let file: ToyLmFile =
            serde_json::from_str(text).map_err(|e| LmError::InvalidModel(e.to_string()))?;
        if file.format != FORMAT {
            return Err(LmError::InvalidModel(format!("unsupported format `{}`", file.format)));
        }
        let mut table = HashMap::with_capacity(file.contexts.len());
        for entry in file.contexts {
            for &(id, _) in &entry.counts {
                file.vocabulary.check_id(id)?;
            }
            let total = entry.counts.iter().map(|(_, c)| c).sum();
            table.insert(
                ContextKey {
                    bucket: entry.bucket,
                    context: entry.context,
                },
                ContextCounts {
                    total,
                    counts: entry.counts,
                },
            );
        }
        Ok(Self {
            vocab: file.vocabulary,
            order: file.order,
            smoothing: file.smoothing,
            buckets: file.buckets,
            table,
        })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = fs::read_to_string(path).map_err(LmError::Transport)?;
        Self::from_json(&text)
    }
}

fn bucket_of(facts: &FactList, buckets: u64) -> u64 {
    fnv1a(facts.linearize().as_bytes()) % buckets
}

/// Last `order - 1` tokens, left-padded with bos.
fn context_of(prefix: &[TokenId], order: usize, bos: TokenId) -> Vec<TokenId> {
    let width = order - 1;
    let mut ctx = vec![bos; width.saturating_sub(prefix.len())];
    ctx.extend_from_slice(&prefix[prefix.len().saturating_sub(width)..]);
    ctx
}

impl LanguageModel for ToyLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, prefix: &[TokenId], facts: &FactList) -> Result<LogProbVector, LmError> {
        self.vocab.check_prefix(prefix)?;
        let size = self.vocab.len();
        if prefix.len() > 1 && prefix.last() == Some(&self.vocab.eos()) {
            return Ok(LogProbVector::one_hot(size, self.vocab.eos()));
        }
        let Some(ctx) = self.lookup(prefix, facts) else {
            return Ok(LogProbVector::from_normalized(vec![-(size as f64).ln(); size]));
        };
        let k = self.smoothing;
        let denom = (ctx.total as f64 + k * size as f64).ln();
        let floor = if k > 0.0 { k.ln() - denom } else { f64::NEG_INFINITY };
        let mut values = vec![floor; size];
        for &(id, count) in &ctx.counts {
            values[id as usize] = (count as f64 + k).ln() - denom;
        }
        Ok(LogProbVector::from_normalized(values))
    }

    fn greedy_next(&self, prefix: &[TokenId], facts: &FactList) -> Result<TokenId, LmError> {
        self.vocab.check_prefix(prefix)?;
        if prefix.len() > 1 && prefix.last() == Some(&self.vocab.eos()) {
            return Ok(self.vocab.eos());
        }
        let Some(ctx) = self.lookup(prefix, facts) else {
            return Ok(0);
        };
        // Counted tokens always beat unseen ones; lowest id among the top count.
        let mut best = ctx.counts[0];
        for &(id, count) in &ctx.counts[1..] {
            if count > best.1 {
                best = (id, count);
            }
        }
        Ok(best.0)
    }
}
