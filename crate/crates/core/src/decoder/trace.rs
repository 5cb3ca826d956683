use serde::{Deserialize, Serialize};

use crate::lm::TokenId;
use crate::verifier::HypothesisKind;

/// One scored expansion at a decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub tokens: Vec<TokenId>,
    #[serde(with = "neg_inf_as_null")]
    pub gen_logprob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<f64>,
    #[serde(with = "neg_inf_as_null")]
    pub combined: f64,
    pub finished: bool,
    pub selected: bool,
}

/// A verifier call made while scoring a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    /// Index into the step's candidate list.
    pub candidate: usize,
    pub kind: HypothesisKind,
    /// Content length of the candidate when the verdict was issued.
    pub t: usize,
    pub score: f64,
    pub negative: bool,
    /// `t` relative to the final output length, in `[0, 1]`.
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub candidates: Vec<CandidateRecord>,
    pub verdicts: Vec<VerdictRecord>,
}

/// Per-step records of one decode call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
}

impl DecodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &VerdictRecord> {
        self.steps.iter().flat_map(|s| s.verdicts.iter())
    }

    pub fn negative_count(&self) -> usize {
        self.verdicts().filter(|v| v.negative).count()
    }

    /// Longest token sequence (bos included) among recorded candidates.
    pub fn longest_candidate(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| s.candidates.iter())
            .map(|c| c.tokens.len())
            .max()
            .unwrap_or(0)
    }

    pub(crate) fn set_positions(&mut self, output_len: usize) {
        let denom = output_len.max(1) as f64;
        for v in self.steps.iter_mut().flat_map(|s| s.verdicts.iter_mut()) {
            v.position = (v.t as f64 / denom).clamp(0.0, 1.0);
        }
    }

    /// One step record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> serde_json::Result<Self> {
        let steps = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { steps })
    }
}

/// JSON has no infinities; impossible continuations are written as `null`.
mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
