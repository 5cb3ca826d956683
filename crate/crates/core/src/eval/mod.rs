//! Metrics and analyses over decode runs.
//!
//! Faithfulness is measured with the rule oracle (`hallucination_rate`), not
//! a learned metric: an output counts as hallucinated when any of its input
//! triples is judged unsupported by it.

mod bleu;
mod histogram;

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{decode, DecodeConfig, DecodeError, DecodeTrace};
use crate::knowledge::K2TInstance;
use crate::lm::LanguageModel;
use crate::verifier::{RuleOracle, Verifier, VerifyError};

pub use bleu::{bleu, corpus_bleu, segment_stats, BleuStats};
pub use histogram::{position_histogram, PositionHistogram, CSV_HEADER};

pub const BLEU_MAX_N: usize = 4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("instance {index}: {source}")]
    Decode {
        index: usize,
        #[source]
        source: DecodeError,
    },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("runs cover different instance sets: {0}")]
    Mismatch(String),
    #[error("sweep needs at least one value")]
    EmptyValues,
    #[error("invalid length bounds: {0}")]
    Bounds(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{0} outputs for {1} instances")]
    OutputCount(usize, usize),
}

/// Fraction of outputs with at least one triple judged unsupported.
pub fn hallucination_rate(outputs: &[String], instances: &[K2TInstance], oracle: &RuleOracle) -> Result<f64, EvalError> {
    if outputs.len() != instances.len() {
        return Err(EvalError::OutputCount(outputs.len(), instances.len()));
    }
    if outputs.is_empty() {
        return Ok(0.0);
    }
    let flags = hallucination_flags(outputs, instances, oracle)?;
    Ok(flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
}

pub fn hallucination_flags(outputs: &[String], instances: &[K2TInstance], oracle: &RuleOracle) -> Result<Vec<bool>, EvalError> {
    outputs
        .iter()
        .zip(instances)
        .map(|(o, inst)| oracle.any_unsupported(&inst.facts, o).map_err(EvalError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub bleu: Option<f64>,
    pub hallucinated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instances: usize,
    /// Corpus BLEU; `None` when no instance has references.
    pub bleu: Option<f64>,
    /// Oracle hallucination rate; `None` without an oracle.
    pub hallucination_rate: Option<f64>,
    pub negative_verdicts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub config: DecodeConfig,
    /// Linearized facts per instance, identifying the instance set.
    pub instance_keys: Vec<String>,
    pub outputs: Vec<String>,
    pub metrics: Vec<InstanceMetrics>,
    pub summary: RunSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<DecodeTrace>,
}

/// Scores already-decoded outputs.
pub fn evaluate_outputs(
    label: &str,
    config: DecodeConfig,
    instances: &[K2TInstance],
    outputs: Vec<String>,
    traces: Vec<DecodeTrace>,
    oracle: Option<&RuleOracle>,
) -> Result<RunResult, EvalError> {
    if outputs.len() != instances.len() {
        return Err(EvalError::OutputCount(outputs.len(), instances.len()));
    }
    let flags = oracle
        .map(|o| hallucination_flags(&outputs, instances, o))
        .transpose()?;
    let metrics = outputs
        .iter()
        .zip(instances)
        .enumerate()
        .map(|(i, (o, inst))| InstanceMetrics {
            bleu: (!inst.references.is_empty()).then(|| bleu(o, &inst.references, BLEU_MAX_N)),
            hallucinated: flags.as_ref().map(|f| f[i]),
        })
        .collect();
    let summary = summarize(instances, &outputs, flags.as_deref(), &traces);
    Ok(RunResult {
        label: label.to_owned(),
        config,
        instance_keys: instances.iter().map(|i| i.facts.linearize()).collect(),
        outputs,
        metrics,
        summary,
        traces,
    })
}

fn summarize(instances: &[K2TInstance], outputs: &[String], flags: Option<&[bool]>, traces: &[DecodeTrace]) -> RunSummary {
    let refs: Vec<Vec<String>> = instances.iter().map(|i| i.references.clone()).collect();
    let any_refs = refs.iter().any(|r| !r.is_empty());
    RunSummary {
        instances: instances.len(),
        bleu: any_refs.then(|| corpus_bleu(outputs, &refs, BLEU_MAX_N)),
        hallucination_rate: flags.map(|f| {
            if f.is_empty() {
                0.0
            } else {
                f.iter().filter(|x| **x).count() as f64 / f.len() as f64
            }
        }),
        negative_verdicts: traces.iter().map(DecodeTrace::negative_count).sum(),
    }
}

/// Decodes every instance (in parallel, merged by index) and scores the run.
pub fn run_decode(
    instances: &[K2TInstance],
    lm: &dyn LanguageModel,
    verifier: Option<&dyn Verifier>,
    oracle: Option<&RuleOracle>,
    config: &DecodeConfig,
    keep_traces: bool,
) -> Result<RunResult, EvalError> {
    let decoded = instances
        .par_iter()
        .enumerate()
        .map(|(index, inst)| decode(&inst.facts, lm, verifier, config).map_err(|source| EvalError::Decode { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut outputs = Vec::with_capacity(decoded.len());
    let mut traces = Vec::with_capacity(decoded.len());
    for d in decoded {
        outputs.push(d.text);
        traces.push(d.trace);
    }
    let mut result = evaluate_outputs(&config.strategy.to_string(), config.effective(), instances, outputs, traces, oracle)?;
    if !keep_traces {
        result.traces.clear();
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    BeamSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub bleu: Option<f64>,
    pub hallucination_rate: Option<f64>,
    pub outputs: Vec<String>,
}

/// One full run per axis value.
pub fn sweep(
    instances: &[K2TInstance],
    lm: &dyn LanguageModel,
    verifier: Option<&dyn Verifier>,
    oracle: Option<&RuleOracle>,
    base: &DecodeConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyValues);
    }
    values
        .iter()
        .map(|&value| {
            let config = match axis {
                SweepAxis::Alpha => DecodeConfig { alpha: value, ..*base },
                SweepAxis::BeamSize => DecodeConfig {
                    k: value as usize,
                    ..*base
                },
            };
            let run = run_decode(instances, lm, verifier, oracle, &config, false)?;
            Ok(SweepRow {
                value,
                bleu: run.summary.bleu,
                hallucination_rate: run.summary.hallucination_rate,
                outputs: run.outputs,
            })
        })
        .collect()
}

pub fn sweep_table(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let name = match axis {
        SweepAxis::Alpha => "alpha",
        SweepAxis::BeamSize => "beam_size",
    };
    let mut out = format!("{name:>10}  {:>8}  {:>18}\n", "bleu", "oracle_halluc_rate");
    for r in rows {
        let _ = writeln!(out, "{:>10}  {:>8}  {:>18}", r.value, fmt_opt(r.bleu, 2), fmt_opt(r.hallucination_rate, 4));
    }
    out
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// The short/medium/long grouping by triple count.
pub fn default_length_bounds() -> Vec<RangeInclusive<usize>> {
    vec![1..=1, 2..=4, 5..=7]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub min_triples: usize,
    pub max_triples: usize,
    pub size: usize,
    pub bleu: Option<f64>,
    pub hallucination_rate: Option<f64>,
}

/// Metrics per triple-count group. Empty groups are kept with `size = 0`.
pub fn length_split_report(
    instances: &[K2TInstance],
    result: &RunResult,
    bounds: &[RangeInclusive<usize>],
) -> Result<Vec<GroupMetrics>, EvalError> {
    if result.outputs.len() != instances.len() {
        return Err(EvalError::OutputCount(result.outputs.len(), instances.len()));
    }
    for (i, a) in bounds.iter().enumerate() {
        if a.is_empty() {
            return Err(EvalError::Bounds(format!("{a:?} is empty")));
        }
        for b in &bounds[i + 1..] {
            if a.start() <= b.end() && b.start() <= a.end() {
                return Err(EvalError::Bounds(format!("{a:?} overlaps {b:?}")));
            }
        }
    }
    let mut groups = vec![Vec::new(); bounds.len()];
    for (i, inst) in instances.iter().enumerate() {
        let m = inst.facts.len();
        let g = bounds
            .iter()
            .position(|b| b.contains(&m))
            .ok_or_else(|| EvalError::Bounds(format!("instance {i} has {m} triples, outside every group")))?;
        groups[g].push(i);
    }
    Ok(bounds
        .iter()
        .zip(groups)
        .map(|(b, idx)| {
            let outputs: Vec<String> = idx.iter().map(|&i| result.outputs[i].clone()).collect();
            let refs: Vec<Vec<String>> = idx.iter().map(|&i| instances[i].references.clone()).collect();
            let flags: Option<Vec<bool>> = idx.iter().map(|&i| result.metrics[i].hallucinated).collect();
            GroupMetrics {
                min_triples: *b.start(),
                max_triples: *b.end(),
                size: idx.len(),
                bleu: (refs.iter().any(|r| !r.is_empty())).then(|| corpus_bleu(&outputs, &refs, BLEU_MAX_N)),
                hallucination_rate: flags
                    .filter(|f| !f.is_empty())
                    .map(|f| f.iter().filter(|x| **x).count() as f64 / f.len() as f64),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDiff {
    pub index: usize,
    /// Output of every run, in run order.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub summaries: Vec<RunSummary>,
    pub diffs: Vec<InstanceDiff>,
}

type SummaryCell = Box<dyn Fn(&RunSummary) -> String>;

impl Comparison {
    /// Aligned text table, one column per run.
    pub fn table(&self) -> String {
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(12);
        let mut out = format!("{:<20}", "metric");
        for l in &self.labels {
            let _ = write!(out, "  {l:>width$}");
        }
        out.push('\n');
        let rows: [(&str, SummaryCell); 4] = [
            ("instances", Box::new(|s| s.instances.to_string())),
            ("bleu", Box::new(|s| fmt_opt(s.bleu, 2))),
            ("oracle_halluc_rate", Box::new(|s| fmt_opt(s.hallucination_rate, 4))),
            ("negative_verdicts", Box::new(|s| s.negative_verdicts.to_string())),
        ];
        for (name, f) in rows.iter() {
            let _ = write!(out, "{name:<20}");
            for s in &self.summaries {
                let _ = write!(out, "  {:>width$}", f(s));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{:<20}  {}", "differing_outputs", self.diffs.len());
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

/// Side-by-side summaries plus the instances whose outputs differ.
pub fn compare_report(runs: &[RunResult]) -> Result<Comparison, EvalError> {
    let Some(first) = runs.first() else {
        return Err(EvalError::Mismatch("no runs given".into()));
    };
    for r in &runs[1..] {
        if r.instance_keys != first.instance_keys {
            return Err(EvalError::Mismatch(format!("`{}` and `{}`", first.label, r.label)));
        }
    }
    let diffs = (0..first.outputs.len())
        .filter(|&i| runs.iter().any(|r| r.outputs[i] != first.outputs[i]))
        .map(|i| InstanceDiff {
            index: i,
            outputs: runs.iter().map(|r| r.outputs[i].clone()).collect(),
        })
        .collect();
    Ok(Comparison {
        labels: runs.iter().map(|r| r.label.clone()).collect(),
        summaries: runs.iter().map(|r| r.summary.clone()).collect(),
        diffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::Strategy;
    use crate::world::{generate_world, WorldConfig};

    fn world_run(outputs: impl Fn(&K2TInstance) -> String) -> (Vec<K2TInstance>, RunResult, RuleOracle) {
        let w = generate_world(&WorldConfig {
            instances: 30,
            min_triples: 1,
            max_triples: 7,
            ..WorldConfig::default()
        });
        let outs: Vec<String> = w.corpus.iter().map(&outputs).collect();
        let oracle = RuleOracle::new(w.dictionary.clone());
        let run = evaluate_outputs("x", DecodeConfig::toy(Strategy::Beam), &w.corpus, outs, vec![], Some(&oracle)).unwrap();
        (w.corpus, run, oracle)
    }

    #[test]
    fn faithful_outputs_do_not_hallucinate() {
        let (corpus, run, oracle) = world_run(|i| i.references[0].clone());
        assert_eq!(run.summary.hallucination_rate, Some(0.0));
        assert!((run.summary.bleu.unwrap() - 100.0).abs() < 1e-9);
        let perturbed: Vec<String> = corpus
            .iter()
            .map(|i| {
                let mut triples = i.facts.triples().to_vec();
                let alt = oracle.dictionary().get(&triples[0]).unwrap()[0].clone();
                triples[0] = triples[0].with_field(alt.position, &alt.replacement).unwrap();
                crate::fate::render_description(&triples, &crate::world::templates(), None).unwrap()
            })
            .collect();
        assert_eq!(hallucination_rate(&perturbed, &corpus, &oracle).unwrap(), 1.0);
    }

    #[test]
    fn length_groups_partition() {
        let (corpus, run, _) = world_run(|i| i.references[0].clone());
        let groups = length_split_report(&corpus, &run, &default_length_bounds()).unwrap();
        assert_eq!(groups.iter().map(|g| g.size).sum::<usize>(), corpus.len());
        assert!(length_split_report(&corpus, &run, &[1..=3, 3..=7]).is_err());
        assert!(length_split_report(&corpus, &run, &[1..=2]).is_err());
    }

    #[test]
    fn compare_identical_and_single() {
        let (_, run, _) = world_run(|i| i.references[0].clone());
        let one = compare_report(std::slice::from_ref(&run)).unwrap();
        assert_eq!(one.labels.len(), 1);
        let two = compare_report(&[run.clone(), run.clone()]).unwrap();
        assert!(two.diffs.is_empty());
        assert!(two.table().contains("oracle_halluc_rate"));
        let mut other = run.clone();
        other.instance_keys.pop();
        assert!(compare_report(&[run, other]).is_err());
    }
}
