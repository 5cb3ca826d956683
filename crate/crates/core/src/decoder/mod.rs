//! Greedy, beam, and lookahead-verified beam search.
//!
//! Every strategy runs the same step loop. Unfinished candidates are
//! expanded over the vocabulary, pre-pruned to `prune_width` by generator
//! log-probability, and (for the `tweak-*` strategies) rescored with
//! `f = log p(y<=t | x) + alpha * f_faith`, where
//! `f_faith = w_t * h(x, backward) + (1 - w_t) * h(x, forward)`.
//! The best `k` by `f` survive; ties fall back to generator score, then to
//! lexicographic token ids.

mod trace;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::FactList;
use crate::lm::{LanguageModel, LmError, TokenId, Vocabulary};
use crate::verifier::{HypothesisKind, Verdict, Verifier, VerifyError};

pub use trace::{CandidateRecord, DecodeTrace, StepRecord, VerdictRecord};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error("strategy {0} needs a verifier")]
    MissingVerifier(Strategy),
    #[error("language model failed on candidate `{candidate}`: {source}")]
    Lm {
        candidate: String,
        #[source]
        source: LmError,
    },
    #[error("verifier failed on candidate `{candidate}`: {source}")]
    Verify {
        candidate: String,
        #[source]
        source: VerifyError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    Beam,
    TweakNliB,
    TweakNliF,
    TweakNliBf,
    TweakHvm,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Greedy,
        Strategy::Beam,
        Strategy::TweakNliB,
        Strategy::TweakNliF,
        Strategy::TweakNliBf,
        Strategy::TweakHvm,
    ];

    pub const TWEAK: [Strategy; 4] = [
        Strategy::TweakNliB,
        Strategy::TweakNliF,
        Strategy::TweakNliBf,
        Strategy::TweakHvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
            Strategy::TweakNliB => "tweak-nli-b",
            Strategy::TweakNliF => "tweak-nli-f",
            Strategy::TweakNliBf => "tweak-nli-bf",
            Strategy::TweakHvm => "tweak-hvm",
        }
    }

    pub fn is_tweak(self) -> bool {
        !matches!(self, Strategy::Greedy | Strategy::Beam)
    }

    pub fn scheme(self) -> WeightScheme {
        match self {
            Strategy::TweakNliB | Strategy::Greedy | Strategy::Beam => WeightScheme::Backward,
            Strategy::TweakNliF => WeightScheme::Forward,
            Strategy::TweakNliBf => WeightScheme::Dynamic,
            Strategy::TweakHvm => WeightScheme::Hvm,
        }
    }

    /// NLI variants verify `backward ∘ rollout`; the HVM verifies the
    /// rollout alone.
    pub fn forward_form(self) -> ForwardForm {
        match self {
            Strategy::TweakHvm => ForwardForm::RolloutOnly,
            _ => ForwardForm::Concatenated,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// How `w_t` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "scheme", content = "w")]
pub enum WeightScheme {
    /// Always 1.
    Backward,
    /// Always 0.
    Forward,
    /// NLI-B+F: `t / |backward ∘ rollout|`.
    Dynamic,
    /// HVM: `t / (t + |rollout|)`.
    Hvm,
    /// A constant weight (the "without dynamic aggregation" ablation).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardForm {
    Concatenated,
    RolloutOnly,
}

/// `w_t` for a candidate with `t` content tokens and a rollout of
/// `forward_len` content tokens. Dynamic schemes return 1 when there is no
/// rollout content.
pub fn faithfulness_weight(scheme: WeightScheme, t: usize, forward_len: usize) -> f64 {
    match scheme {
        WeightScheme::Backward => 1.0,
        WeightScheme::Forward => 0.0,
        WeightScheme::Fixed(w) => w,
        WeightScheme::Dynamic | WeightScheme::Hvm => {
            if forward_len == 0 {
                1.0
            } else {
                t as f64 / (t + forward_len) as f64
            }
        }
    }
}

/// `gen_logprob + alpha * faith`; exactly `gen_logprob` when `alpha == 0`.
pub fn combined_score(gen_logprob: f64, faith: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        gen_logprob
    } else {
        gen_logprob + alpha * faith
    }
}

pub const DEFAULT_MAX_LEN: usize = 384;
pub const TOY_MAX_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub alpha: f64,
    /// Expansions rescored per step; `None` means `2k`.
    pub prune_width: Option<usize>,
    /// Maximum rollout tokens; `None` means `max_len - t`.
    pub rollout_cap: Option<usize>,
    pub max_len: usize,
    pub seed: u64,
    /// Replaces the strategy's `w_t` scheme with a constant.
    pub weight_override: Option<f64>,
    /// Reuse rollouts derived from a parent candidate's rollout.
    pub cache_rollouts: bool,
}

impl DecodeConfig {
    /// Defaults: beam k=5; tweak k=4, alpha=8; max_len 384.
    pub fn new(strategy: Strategy) -> Self {
        let (k, alpha) = match strategy {
            Strategy::Greedy => (1, 0.0),
            Strategy::Beam => (5, 0.0),
            _ => (4, 8.0),
        };
        Self {
            strategy,
            k,
            alpha,
            prune_width: None,
            rollout_cap: None,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
            weight_override: None,
            cache_rollouts: true,
        }
    }

    /// Same defaults with the toy-corpus length cap.
    pub fn toy(strategy: Strategy) -> Self {
        Self {
            max_len: TOY_MAX_LEN,
            ..Self::new(strategy)
        }
    }

    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn prune_width(&self) -> usize {
        self.prune_width.unwrap_or(2 * self.k)
    }

    pub fn scheme(&self) -> WeightScheme {
        match self.weight_override {
            Some(w) => WeightScheme::Fixed(w),
            None => self.strategy.scheme(),
        }
    }

    /// Greedy is beam search with `k = 1` and no faithfulness term.
    pub fn effective(&self) -> Self {
        match self.strategy {
            Strategy::Greedy => Self {
                k: 1,
                alpha: 0.0,
                ..*self
            },
            Strategy::Beam => Self { alpha: 0.0, ..*self },
            _ => *self,
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let err = |m: String| Err(DecodeError::Config(m));
        if self.k == 0 {
            return err("k must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return err(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.prune_width() < self.k {
            return err(format!("prune width {} is below k = {}", self.prune_width(), self.k));
        }
        if self.max_len == 0 {
            return err("max_len must be at least 1".into());
        }
        if let Some(w) = self.weight_override {
            if !(0.0..=1.0).contains(&w) {
                return err(format!("weight override {w} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCandidate {
    /// Starts with bos.
    pub tokens: Vec<TokenId>,
    pub gen_logprob: f64,
    pub rollout: Option<Vec<TokenId>>,
    pub faith: Option<f64>,
    pub combined: f64,
    pub finished: bool,
}

impl BeamCandidate {
    pub fn start(vocab: &Vocabulary) -> Self {
        Self {
            tokens: vec![vocab.bos()],
            gen_logprob: 0.0,
            rollout: None,
            faith: None,
            combined: 0.0,
            finished: false,
        }
    }

    /// Tokens excluding bos and a final eos.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - 1 - usize::from(self.finished)
    }

    /// Generated tokens, eos included.
    pub fn generated_len(&self) -> usize {
        self.tokens.len() - 1
    }
}

/// Order used for final selection: combined desc, generator score desc,
/// token ids ascending.
pub fn rank(a: &BeamCandidate, b: &BeamCandidate) -> Ordering {
    b.combined
        .total_cmp(&a.combined)
        .then_with(|| b.gen_logprob.total_cmp(&a.gen_logprob))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Greedy continuation of `prefix`, stopping after eos or `cap` tokens.
/// Never includes the prefix.
pub fn rollout(
    lm: &dyn LanguageModel,
    prefix: &[TokenId],
    facts: &FactList,
    cap: usize,
) -> Result<Vec<TokenId>, LmError> {
    let eos = lm.vocabulary().eos();
    let mut context = prefix.to_vec();
    let mut out = Vec::new();
    if prefix.last() == Some(&eos) && prefix.len() > 1 {
        return Ok(out);
    }
    while out.len() < cap {
        let next = lm.greedy_next(&context, facts)?;
        out.push(next);
        context.push(next);
        if next == eos {
            break;
        }
    }
    Ok(out)
}

/// Result of `f_faith` for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FaithScore {
    pub w_t: f64,
    pub backward: Option<Verdict>,
    pub forward: Option<Verdict>,
    pub value: f64,
}

/// `w_t * h(x, backward) + (1 - w_t) * h(x, forward)`, skipping the side
/// whose weight is zero. Empty hypotheses score 0 without a verifier call.
#[allow(clippy::too_many_arguments)]
pub fn faith_score(
    verifier: &dyn Verifier,
    facts: &FactList,
    backward: &str,
    rollout: &str,
    scheme: WeightScheme,
    form: ForwardForm,
    t: usize,
    forward_len: usize,
) -> Result<FaithScore, VerifyError> {
    let w = faithfulness_weight(scheme, t, forward_len);
    let forward = match form {
        ForwardForm::RolloutOnly => rollout.to_owned(),
        ForwardForm::Concatenated => [backward, rollout]
            .into_iter()
            .filter(|s| !s.trim().is_empty())
            .collect::<Vec<_>>()
            .join(" "),
    };
    let use_b = w > 0.0;
    let use_f = w < 1.0;
    let b_text = Some(backward).filter(|s| use_b && !s.trim().is_empty());
    let f_text = Some(forward.as_str()).filter(|s| use_f && !s.trim().is_empty());
    let (bv, fv) = if b_text.is_none() && f_text.is_none() {
        (None, None)
    } else {
        verifier.verify_pair(facts, b_text, f_text)?
    };
    let hb = bv.as_ref().map_or(0.0, |v| v.score);
    let hf = fv.as_ref().map_or(0.0, |v| v.score);
    let mut value = 0.0;
    if use_b {
        value += w * hb;
    }
    if use_f {
        value += (1.0 - w) * hf;
    }
    Ok(FaithScore {
        w_t: w,
        backward: bv,
        forward: fv,
        value,
    })
}

struct Expansion {
    parent: usize,
    token: TokenId,
    gen: f64,
}

struct Scored {
    candidate: BeamCandidate,
    record: CandidateRecord,
    verdicts: Vec<(HypothesisKind, Verdict)>,
    t: usize,
}

/// Everything a step needs besides the beam.
pub struct StepContext<'a> {
    pub lm: &'a dyn LanguageModel,
    pub verifier: Option<&'a dyn Verifier>,
    pub facts: &'a FactList,
    pub config: DecodeConfig,
}

impl StepContext<'_> {
    fn candidate_text(&self, tokens: &[TokenId]) -> String {
        self.lm.vocabulary().decode(tokens)
    }

    fn expand(&self, beam: &[BeamCandidate]) -> Result<Vec<Expansion>, DecodeError> {
        let vocab = self.lm.vocabulary();
        let bos = vocab.bos();
        let per_parent = beam
            .par_iter()
            .enumerate()
            .filter(|(_, c)| !c.finished)
            .map(|(i, c)| {
                let lp = self.lm.next_logprobs(&c.tokens, self.facts).map_err(|source| DecodeError::Lm {
                    candidate: self.candidate_text(&c.tokens),
                    source,
                })?;
                Ok(lp
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(id, _)| *id as TokenId != bos)
                    .map(|(id, v)| Expansion {
                        parent: i,
                        token: id as TokenId,
                        gen: c.gen_logprob + v,
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>, DecodeError>>()?;
        Ok(per_parent.into_iter().flatten().collect())
    }

    fn rollout_for(&self, beam: &[BeamCandidate], e: &Expansion, tokens: &[TokenId]) -> Result<Vec<TokenId>, DecodeError> {
        let cfg = &self.config;
        let generated = tokens.len() - 1;
        let cap = cfg.rollout_cap.unwrap_or(cfg.max_len.saturating_sub(generated));
        if cfg.cache_rollouts {
            if let Some(parent) = &beam[e.parent].rollout {
                let complete = parent.last() == Some(&self.lm.vocabulary().eos());
                if parent.first() == Some(&e.token) && (complete || cfg.rollout_cap.is_none()) {
                    let mut r = parent[1..].to_vec();
                    r.truncate(cap);
                    return Ok(r);
                }
            }
        }
        rollout(self.lm, tokens, self.facts, cap).map_err(|source| DecodeError::Lm {
            candidate: self.candidate_text(tokens),
            source,
        })
    }

    fn score(&self, beam: &[BeamCandidate], e: &Expansion) -> Result<Scored, DecodeError> {
        let cfg = &self.config;
        let vocab = self.lm.vocabulary();
        let mut tokens = beam[e.parent].tokens.clone();
        tokens.push(e.token);
        let finished = e.token == vocab.eos();
        let t = tokens.len() - 1 - usize::from(finished);
        let mut candidate = BeamCandidate {
            tokens,
            gen_logprob: e.gen,
            rollout: None,
            faith: None,
            combined: e.gen,
            finished,
        };
        let mut record = CandidateRecord {
            tokens: candidate.tokens.clone(),
            gen_logprob: e.gen,
            w_t: None,
            backward: None,
            forward: None,
            combined: e.gen,
            finished,
            selected: false,
        };
        let mut verdicts = Vec::new();
        if cfg.strategy.is_tweak() {
            let verifier = self.verifier.ok_or(DecodeError::MissingVerifier(cfg.strategy))?;
            let scheme = cfg.scheme();
            let needs_rollout = !matches!(scheme, WeightScheme::Backward | WeightScheme::Fixed(1.0));
            let roll = if needs_rollout {
                self.rollout_for(beam, e, &candidate.tokens)?
            } else {
                Vec::new()
            };
            let forward_len = roll.iter().filter(|&&id| id != vocab.eos()).count();
            let backward_text = vocab.decode(&candidate.tokens);
            let rollout_text = vocab.decode(&roll);
            let fs = faith_score(
                verifier,
                self.facts,
                &backward_text,
                &rollout_text,
                scheme,
                cfg.strategy.forward_form(),
                t,
                forward_len,
            )
            .map_err(|source| DecodeError::Verify {
                candidate: backward_text.clone(),
                source,
            })?;
            candidate.faith = Some(fs.value);
            candidate.combined = combined_score(e.gen, fs.value, cfg.alpha);
            candidate.rollout = needs_rollout.then_some(roll);
            record.w_t = Some(fs.w_t);
            record.backward = fs.backward.as_ref().map(|v| v.score);
            record.forward = fs.forward.as_ref().map(|v| v.score);
            record.combined = candidate.combined;
            if let Some(v) = fs.backward {
                verdicts.push((HypothesisKind::Backward, v));
            }
            if let Some(v) = fs.forward {
                verdicts.push((HypothesisKind::Forward, v));
            }
        }
        Ok(Scored {
            candidate,
            record,
            verdicts,
            t,
        })
    }

    /// One decoding step: expand, pre-prune, rescore, select.
    pub fn step(&self, beam: &[BeamCandidate], step: usize) -> Result<(Vec<BeamCandidate>, StepRecord), DecodeError> {
        let cfg = &self.config;
        let mut expansions = self.expand(beam)?;
        let by_gen = |a: &Expansion, b: &Expansion| {
            b.gen
                .total_cmp(&a.gen)
                .then_with(|| beam[a.parent].tokens.cmp(&beam[b.parent].tokens))
                .then_with(|| a.token.cmp(&b.token))
        };
        let m = cfg.prune_width().min(expansions.len());
        if m < expansions.len() && m > 0 {
            expansions.select_nth_unstable_by(m - 1, by_gen);
            expansions.truncate(m);
        }
        expansions.sort_by(by_gen);

        let scored = expansions
            .par_iter()
            .map(|e| self.score(beam, e))
            .collect::<Result<Vec<_>, _>>()?;

        // Pool entries: (candidate, index into scored or None for frozen).
        let mut pool: Vec<(BeamCandidate, Option<usize>)> = beam
            .iter()
            .filter(|c| c.finished)
            .cloned()
            .map(|c| (c, None))
            .collect();
        pool.extend(scored.iter().enumerate().map(|(i, s)| (s.candidate.clone(), Some(i))));
        pool.sort_by(|a, b| rank(&a.0, &b.0));
        pool.truncate(cfg.k);

        let mut candidates: Vec<CandidateRecord> = scored.iter().map(|s| s.record.clone()).collect();
        for (_, idx) in &pool {
            if let Some(i) = idx {
                candidates[*i].selected = true;
            }
        }
        let verdicts = scored
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                s.verdicts.iter().map(move |(kind, v)| VerdictRecord {
                    candidate: i,
                    kind: *kind,
                    t: s.t,
                    score: v.score,
                    negative: v.is_negative(),
                    position: 0.0,
                })
            })
            .collect();
        let next = pool.into_iter().map(|(c, _)| c).collect();
        Ok((
            next,
            StepRecord {
                step,
                candidates,
                verdicts,
            },
        ))
    }
}

/// One beam step with a fresh context.
pub fn beam_step(
    beam: &[BeamCandidate],
    lm: &dyn LanguageModel,
    verifier: Option<&dyn Verifier>,
    facts: &FactList,
    config: &DecodeConfig,
    step: usize,
) -> Result<(Vec<BeamCandidate>, StepRecord), DecodeError> {
    let config = config.effective();
    config.validate()?;
    StepContext {
        lm,
        verifier,
        facts,
        config,
    }
    .step(beam, step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// Best sequence, bos first.
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub gen_logprob: f64,
    pub combined: f64,
    pub beam: Vec<BeamCandidate>,
    pub trace: DecodeTrace,
}

/// Runs beam steps until every candidate has finished or `max_len` tokens
/// have been generated.
pub fn decode(
    facts: &FactList,
    lm: &dyn LanguageModel,
    verifier: Option<&dyn Verifier>,
    config: &DecodeConfig,
) -> Result<DecodeOutput, DecodeError> {
    let config = config.effective();
    config.validate()?;
    if config.strategy.is_tweak() && verifier.is_none() {
        return Err(DecodeError::MissingVerifier(config.strategy));
    }
    let ctx = StepContext {
        lm,
        verifier,
        facts,
        config,
    };
    let mut beam = vec![BeamCandidate::start(lm.vocabulary())];
    let mut trace = DecodeTrace::default();
    let mut step = 1;
    while step <= config.max_len && beam.iter().any(|c| !c.finished) {
        let (next, record) = ctx.step(&beam, step)?;
        beam = next;
        trace.steps.push(record);
        step += 1;
    }
    let best = beam[0].clone();
    trace.set_positions(best.content_len());
    Ok(DecodeOutput {
        text: lm.vocabulary().decode(&best.tokens),
        tokens: best.tokens,
        gen_logprob: best.gen_logprob,
        combined: best.combined,
        beam,
        trace,
    })
}
