use std::net::ToSocketAddrs;

use super::{require_content, HypothesisKind, NliScorer, Verdict, Verifier, VerifyError};
use crate::knowledge::FactList;
use crate::protocol::{BridgeClient, Request, Response};

/// NLI scorer served by a bridge (`nli_score` op).
pub struct RemoteNli {
    client: BridgeClient,
}

impl RemoteNli {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, VerifyError> {
        Ok(Self {
            client: BridgeClient::connect(addr)?,
        })
    }

    pub fn with_client(client: BridgeClient) -> Self {
        Self { client }
    }
}

impl NliScorer for RemoteNli {
    fn entail_prob(&self, premise: &str, hypothesis: &str) -> Result<f64, VerifyError> {
        let request = Request::NliScore {
            premise: premise.to_owned(),
            hypothesis: hypothesis.to_owned(),
        };
        match self.client.call(&request)? {
            Response::Entail { entail_prob } if (0.0..=1.0).contains(&entail_prob) => Ok(entail_prob),
            Response::Entail { entail_prob } => Err(VerifyError::Protocol(format!(
                "entail_prob {entail_prob} outside [0, 1]"
            ))),
            other => Err(VerifyError::Protocol(format!("expected entail_prob, got {other:?}"))),
        }
    }
}

/// Tabular HVM served by a bridge (`hvm_table` op).
pub struct RemoteHvm {
    client: BridgeClient,
}

impl RemoteHvm {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, VerifyError> {
        Ok(Self {
            client: BridgeClient::connect(addr)?,
        })
    }

    pub fn with_client(client: BridgeClient) -> Self {
        Self { client }
    }

    fn table(&self, facts: &FactList, backward: &str, forward: &str) -> Result<Vec<[f64; 2]>, VerifyError> {
        let request = Request::HvmTable {
            triples: facts.triples().to_vec(),
            backward: backward.to_owned(),
            forward: forward.to_owned(),
        };
        let table = match self.client.call(&request)? {
            Response::Table { table } => table,
            other => return Err(VerifyError::Protocol(format!("expected table, got {other:?}"))),
        };
        if table.len() != facts.len() {
            return Err(VerifyError::Protocol(format!(
                "table has {} rows for {} triples",
                table.len(),
                facts.len()
            )));
        }
        if let Some(bad) = table.iter().flatten().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(VerifyError::Protocol(format!("table cell {bad} outside [0, 1]")));
        }
        Ok(table)
    }
}

impl Verifier for RemoteHvm {
    fn verify(&self, facts: &FactList, hypothesis: &str, kind: HypothesisKind) -> Result<Verdict, VerifyError> {
        let (b, f) = match kind {
            HypothesisKind::Backward => self.verify_pair(facts, Some(hypothesis), None)?,
            HypothesisKind::Forward => self.verify_pair(facts, None, Some(hypothesis))?,
        };
        Ok(b.or(f).expect("one side requested"))
    }

    fn verify_pair(
        &self,
        facts: &FactList,
        backward: Option<&str>,
        forward: Option<&str>,
    ) -> Result<(Option<Verdict>, Option<Verdict>), VerifyError> {
        backward.map(require_content).transpose()?;
        forward.map(require_content).transpose()?;
        let table = self.table(facts, backward.unwrap_or(""), forward.unwrap_or(""))?;
        let column = |c: usize| Verdict::from_per_triple(table.iter().map(|r| r[c]).collect());
        Ok((backward.map(|_| column(0)), forward.map(|_| column(1))))
    }
}
