use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::decoder::DecodeTrace;
use crate::verifier::HypothesisKind;

pub const CSV_HEADER: &str = "bin_start,bin_end,backward_count,forward_count";

/// Negative verdicts bucketed by relative decoding position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionHistogram {
    /// `bins + 1` ascending edges from 0 to 1.
    pub edges: Vec<f64>,
    pub backward: Vec<u64>,
    pub forward: Vec<u64>,
}

impl PositionHistogram {
    pub fn new(bins: usize) -> Self {
        let bins = bins.max(1);
        Self {
            edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            backward: vec![0; bins],
            forward: vec![0; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.backward.len()
    }

    /// Bin holding `position`; 1.0 falls in the last bin.
    pub fn bin_of(&self, position: f64) -> usize {
        let bins = self.bins();
        ((position.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
    }

    pub fn add(&mut self, position: f64, kind: HypothesisKind) {
        let b = self.bin_of(position);
        match kind {
            HypothesisKind::Backward => self.backward[b] += 1,
            HypothesisKind::Forward => self.forward[b] += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.backward.iter().chain(&self.forward).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..self.bins() {
            w.serialize(CsvRow {
                bin_start: self.edges[i],
                bin_end: self.edges[i + 1],
                backward_count: self.backward[i],
                forward_count: self.forward[i],
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| csv_error(1, e))?;
        if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(EvalError::Csv {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            });
        }
        let mut edges = Vec::new();
        let mut backward = Vec::new();
        let mut forward = Vec::new();
        for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| csv_error(line, e))?;
            match edges.last() {
                Some(prev) if *prev != row.bin_start => {
                    return Err(EvalError::Csv {
                        line,
                        message: "bins are not contiguous".into(),
                    })
                }
                Some(_) => {}
                None => edges.push(row.bin_start),
            }
            edges.push(row.bin_end);
            backward.push(row.backward_count);
            forward.push(row.forward_count);
        }
        if backward.is_empty() {
            return Err(EvalError::Csv {
                line: 2,
                message: "no bins".into(),
            });
        }
        Ok(Self {
            edges,
            backward,
            forward,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    bin_start: f64,
    bin_end: f64,
    backward_count: u64,
    forward_count: u64,
}

fn csv_error(line: usize, e: csv::Error) -> EvalError {
    EvalError::Csv {
        line,
        message: e.to_string(),
    }
}

/// Buckets every negative verdict in `traces` by its relative position.
pub fn position_histogram<'a>(traces: impl IntoIterator<Item = &'a DecodeTrace>, bins: usize) -> PositionHistogram {
    let mut h = PositionHistogram::new(bins);
    for trace in traces {
        for v in trace.verdicts().filter(|v| v.negative) {
            h.add(v.position, v.kind);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{StepRecord, VerdictRecord};

    fn trace(verdicts: Vec<(f64, HypothesisKind, bool)>) -> DecodeTrace {
        DecodeTrace {
            steps: vec![StepRecord {
                step: 1,
                candidates: vec![],
                verdicts: verdicts
                    .into_iter()
                    .map(|(position, kind, negative)| VerdictRecord {
                        candidate: 0,
                        kind,
                        t: 0,
                        score: 0.0,
                        negative,
                        position,
                    })
                    .collect(),
            }],
        }
    }

    #[test]
    fn empty_and_single() {
        let none = trace(vec![(0.3, HypothesisKind::Backward, false)]);
        assert_eq!(position_histogram([&none], 10).total(), 0);
        let one = trace(vec![(5.0 / 10.0, HypothesisKind::Forward, true)]);
        let h = position_histogram([&one], 10);
        assert_eq!(h.forward[5], 1);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let t = trace(vec![
            (0.0, HypothesisKind::Backward, true),
            (1.0, HypothesisKind::Forward, true),
            (0.33, HypothesisKind::Forward, true),
        ]);
        let h = position_histogram([&t], 7);
        assert_eq!(PositionHistogram::from_csv(&h.to_csv()).unwrap(), h);
        assert!(PositionHistogram::from_csv("nope\n").is_err());
    }
}
