use std::net::ToSocketAddrs;

use super::{LanguageModel, LmError, LogProbVector, TokenId, Vocabulary};
use crate::knowledge::FactList;
use crate::protocol::{BridgeClient, Request, Response};

/// Remote vectors come from float32 softmaxes; this is the normalization
/// slack accepted from them.
pub const REMOTE_NORMALIZATION_TOLERANCE: f64 = 1e-4;

/// Language model served by an external bridge process.
pub struct RemoteLm {
    client: BridgeClient,
    vocab: Vocabulary,
    checksum: String,
}

impl RemoteLm {
    pub fn connect(addr: impl ToSocketAddrs, vocab: Vocabulary) -> Result<Self, LmError> {
        let client = BridgeClient::connect(addr)?;
        Ok(Self::with_client(client, vocab))
    }

    pub fn with_client(client: BridgeClient, vocab: Vocabulary) -> Self {
        let checksum = vocab.checksum();
        Self {
            client,
            vocab,
            checksum,
        }
    }
}

impl LanguageModel for RemoteLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, prefix: &[TokenId], facts: &FactList) -> Result<LogProbVector, LmError> {
        self.vocab.check_prefix(prefix)?;
        let request = Request::NextLogprobs {
            prefix: prefix.to_vec(),
            facts_linearized: facts.linearize(),
            vocab_checksum: self.checksum.clone(),
        };
        let values = match self.client.call(&request)? {
            Response::Logprobs { logprobs } => logprobs,
            other => return Err(LmError::Protocol(format!("expected logprobs, got {other:?}"))),
        };
        if values.len() != self.vocab.len() {
            return Err(LmError::Protocol(format!(
                "got {} logprobs for a vocabulary of {}",
                values.len(),
                self.vocab.len()
            )));
        }
        let values = values
            .into_iter()
            .map(|v| v.unwrap_or(f64::NEG_INFINITY))
            .collect();
        LogProbVector::new(values, REMOTE_NORMALIZATION_TOLERANCE).map_err(LmError::Protocol)
    }
}
