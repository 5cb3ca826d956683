//! Synthesis of fact-aligned entailment data.
//!
//! Each corpus instance yields a tuple `(F+, F-, T+, T-)`: the original
//! triples, a copy with exactly one field of one triple replaced, and
//! template realizations of both in which the perturbed field is wrapped in
//! `<Si> ... </Si>` (`i` = index of the perturbed triple). Splitting a
//! description at a decoding position gives a backward/forward hypothesis
//! pair; a hypothesis cut from `T-` that overlaps the marked span is
//! unsupported by triple `i`, every other cell is supported.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::{Perturbation, PerturbationDictionary};
use crate::knowledge::{FactTriple, K2TInstance, KnowledgeError, Position};
use crate::surface::field_words;

/// Separator between per-triple realizations.
pub const SENTENCE_SEPARATOR: &str = " . ";

#[derive(Debug, Error)]
pub enum FateError {
    #[error("no alternative surface form for {position} `{original}`")]
    EmptyPool { position: Position, original: String },
    #[error("no template for relation `{0}`")]
    MissingTemplate(String),
    #[error("template for `{relation}` is invalid: {reason}")]
    BadTemplate { relation: String, reason: String },
    #[error("split {t} out of range for a {len}-token description")]
    SplitOutOfRange { t: usize, len: usize },
    #[error("all pairs carry the {0} label; nothing to balance against")]
    SingleLabel(&'static str),
    #[error("coverage gaps:\n  {}", .0.join("\n  "))]
    Coverage(Vec<String>),
    #[error("malformed span marks: {0}")]
    MalformedMarks(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Relation name to template. Templates are whitespace-tokenized; each of
/// `{subj}`, `{rel}`, `{obj}` appears exactly once, each in its own token,
/// optionally with attached affixes such as `{subj}'s`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateSet(BTreeMap<String, String>);

const PLACEHOLDERS: [(&str, Position); 3] = [
    ("{subj}", Position::Subject),
    ("{rel}", Position::Relation),
    ("{obj}", Position::Object),
];

impl TemplateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, relation: impl Into<String>, template: impl Into<String>) -> Result<(), FateError> {
        let relation = relation.into();
        let template = template.into();
        validate_template(&relation, &template)?;
        self.0.insert(relation, template);
        Ok(())
    }

    pub fn get(&self, relation: &str) -> Option<&str> {
        self.0.get(relation).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn validate_template(relation: &str, template: &str) -> Result<(), FateError> {
    let bad = |reason: String| FateError::BadTemplate {
        relation: relation.to_owned(),
        reason,
    };
    let tokens: Vec<&str> = template.split_whitespace().collect();
    for (ph, _) in PLACEHOLDERS {
        let n = template.matches(ph).count();
        if n != 1 {
            return Err(bad(format!("{ph} occurs {n} times")));
        }
    }
    for tok in &tokens {
        let n = PLACEHOLDERS.iter().filter(|(ph, _)| tok.contains(ph)).count();
        if n > 1 {
            return Err(bad(format!("token `{tok}` holds several placeholders")));
        }
    }
    Ok(())
}

/// Alternative surface forms per `(position, original value)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationPools {
    entries: BTreeMap<(Position, String), Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct PoolEntry {
    position: Position,
    original: String,
    alternatives: Vec<String>,
}

impl Serialize for PerturbationPools {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let list: Vec<PoolEntry> = self
            .entries
            .iter()
            .map(|((position, original), alternatives)| PoolEntry {
                position: *position,
                original: original.clone(),
                alternatives: alternatives.clone(),
            })
            .collect();
        list.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PerturbationPools {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let list = Vec::<PoolEntry>::deserialize(deserializer)?;
        let mut pools = PerturbationPools::new();
        for e in list {
            pools.add(e.position, &e.original, e.alternatives);
        }
        Ok(pools)
    }
}

impl PerturbationPools {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, position: Position, original: &str, alternatives: impl IntoIterator<Item = String>) {
        let list = self.entries.entry((position, original.to_owned())).or_default();
        for alt in alternatives {
            if !list.contains(&alt) {
                list.push(alt);
            }
        }
    }

    /// Alternatives for a field value, excluding the value itself.
    pub fn get(&self, position: Position, original: &str) -> Vec<String> {
        self.entries
            .get(&(position, original.to_owned()))
            .map(|l| l.iter().filter(|a| a.as_str() != original).cloned().collect())
            .unwrap_or_default()
    }
}

/// One FATE tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FateInstance {
    pub f_pos: Vec<FactTriple>,
    pub f_neg: Vec<FactTriple>,
    pub t_pos: String,
    pub t_neg: String,
    pub perturbed_index: usize,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisSource {
    Original,
    Perturbed,
}

/// Backward/forward hypotheses cut from one description, with a label per
/// (original triple, hypothesis) cell. `true` means supported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisPair {
    pub instance: usize,
    pub split: usize,
    pub source: HypothesisSource,
    pub triples: Vec<FactTriple>,
    pub backward: String,
    pub forward: String,
    #[serde(with = "label_matrix")]
    pub labels: Vec<[bool; 2]>,
}

impl HypothesisPair {
    pub fn has_unsupported(&self) -> bool {
        self.labels.iter().flatten().any(|l| !l)
    }

    pub fn unmarked_description(&self) -> String {
        format!("{} {}", self.backward, self.forward)
    }
}

/// Labels on disk are `1` (supported) / `0` (unsupported).
mod label_matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(labels: &[[bool; 2]], s: S) -> Result<S::Ok, S::Error> {
        labels
            .iter()
            .map(|[b, f]| [u8::from(*b), u8::from(*f)])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[bool; 2]>, D::Error> {
        let raw = Vec::<[u8; 2]>::deserialize(d)?;
        raw.into_iter()
            .map(|[b, f]| match (b, f) {
                (0 | 1, 0 | 1) => Ok([b == 1, f == 1]),
                _ => Err(serde::de::Error::custom("labels must be 0 or 1")),
            })
            .collect()
    }
}

/// Description tokens with marks removed, plus the marked span if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedText {
    pub tokens: Vec<String>,
    pub span: Option<(usize, Range<usize>)>,
}

fn tag_index(token: &str) -> Option<(bool, usize)> {
    let (closing, rest) = if let Some(r) = token.strip_prefix("</S") {
        (true, r)
    } else {
        (false, token.strip_prefix("<S")?)
    };
    let digits = rest.strip_suffix('>')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(|i| (closing, i))
}

/// Parses `<Si> ... </Si>` marks. At most one non-empty span is allowed.
pub fn parse_marked(text: &str) -> Result<MarkedText, FateError> {
    let mut tokens = Vec::new();
    let mut span = None;
    let mut open: Option<(usize, usize)> = None;
    for tok in text.split_whitespace() {
        match tag_index(tok) {
            Some((false, i)) => {
                if open.is_some() || span.is_some() {
                    return Err(FateError::MalformedMarks(format!("unexpected opening tag {tok}")));
                }
                open = Some((i, tokens.len()));
            }
            Some((true, i)) => match open.take() {
                Some((j, start)) if j == i && start < tokens.len() => {
                    span = Some((i, start..tokens.len()));
                }
                Some((j, _)) if j == i => {
                    return Err(FateError::MalformedMarks(format!("empty span S{i}")));
                }
                _ => return Err(FateError::MalformedMarks(format!("unmatched closing tag {tok}"))),
            },
            None => tokens.push(tok.to_owned()),
        }
    }
    if let Some((i, _)) = open {
        return Err(FateError::MalformedMarks(format!("unclosed tag S{i}")));
    }
    Ok(MarkedText { tokens, span })
}

/// Replaces one field of `triple` with a draw from `pool` and records the
/// substitution in `dictionary`.
pub fn perturb_triple<R: Rng + ?Sized>(
    triple: &FactTriple,
    position: Position,
    pool: &[String],
    rng: &mut R,
    dictionary: &mut PerturbationDictionary,
) -> Result<FactTriple, FateError> {
    let original = triple.field(position);
    let choices: Vec<&String> = pool.iter().filter(|a| a.as_str() != original).collect();
    if choices.is_empty() {
        return Err(FateError::EmptyPool {
            position,
            original: original.to_owned(),
        });
    }
    let replacement = choices[rng.gen_range(0..choices.len())];
    let perturbed = triple.with_field(position, replacement)?;
    dictionary.record(
        triple,
        Perturbation {
            position,
            original: original.to_owned(),
            replacement: perturbed.field(position).to_owned(),
        },
    );
    Ok(perturbed)
}

/// Which field of which triple to wrap in span marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mark {
    pub index: usize,
    pub position: Position,
}

fn realize(triple: &FactTriple, template: &str, mark: Option<(usize, Position)>) -> String {
    let mut out: Vec<String> = Vec::new();
    for tok in template.split_whitespace() {
        let mut expanded = tok.to_owned();
        let mut marked = None;
        for (ph, position) in PLACEHOLDERS {
            if expanded.contains(ph) {
                expanded = expanded.replace(ph, &field_words(triple.field(position), position));
                if let Some((i, p)) = mark {
                    if p == position {
                        marked = Some(i);
                    }
                }
            }
        }
        match marked {
            Some(i) => out.push(format!("<S{i}> {expanded} </S{i}>")),
            None => out.push(expanded),
        }
    }
    out.join(" ")
}

fn render_with(
    triples: &[FactTriple],
    templates: &[&str],
    mark: Option<Mark>,
) -> String {
    triples
        .iter()
        .zip(templates)
        .enumerate()
        .map(|(j, (t, tpl))| {
            let m = mark.filter(|m| m.index == j).map(|m| (m.index, m.position));
            realize(t, tpl, m)
        })
        .collect::<Vec<_>>()
        .join(SENTENCE_SEPARATOR)
}

fn resolve_templates<'a>(triples: &[FactTriple], templates: &'a TemplateSet) -> Result<Vec<&'a str>, FateError> {
    triples
        .iter()
        .map(|t| {
            templates
                .get(t.relation())
                .ok_or_else(|| FateError::MissingTemplate(t.relation().to_owned()))
        })
        .collect()
}

/// Concatenated per-triple realizations, with the marked field (if any)
/// wrapped in `<Si> ... </Si>`.
pub fn render_description(
    triples: &[FactTriple],
    templates: &TemplateSet,
    mark: Option<Mark>,
) -> Result<String, FateError> {
    let tpls = resolve_templates(triples, templates)?;
    Ok(render_with(triples, &tpls, mark))
}

impl FateInstance {
    /// Builds `T+` and `T-` from the templates of the original relations.
    pub fn render(
        f_pos: Vec<FactTriple>,
        f_neg: Vec<FactTriple>,
        templates: &TemplateSet,
        perturbed_index: usize,
        position: Position,
    ) -> Result<Self, FateError> {
        let tpls = resolve_templates(&f_pos, templates)?;
        let mark = Some(Mark {
            index: perturbed_index,
            position,
        });
        let inst = Self {
            t_pos: render_with(&f_pos, &tpls, mark),
            t_neg: render_with(&f_neg, &tpls, mark),
            f_pos,
            f_neg,
            perturbed_index,
            position,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), FateError> {
        let invalid = |m: String| FateError::InvalidInstance(m);
        if self.f_pos.len() != self.f_neg.len() {
            return Err(invalid("F+ and F- differ in length".into()));
        }
        let differing: Vec<usize> = (0..self.f_pos.len())
            .filter(|&j| self.f_pos[j] != self.f_neg[j])
            .collect();
        if differing != [self.perturbed_index] {
            return Err(invalid(format!(
                "expected exactly triple {} to differ, found {differing:?}",
                self.perturbed_index
            )));
        }
        let (a, b) = (&self.f_pos[self.perturbed_index], &self.f_neg[self.perturbed_index]);
        for p in Position::ALL {
            if (a.field(p) != b.field(p)) != (p == self.position) {
                return Err(invalid(format!("perturbation is not confined to the {}", self.position)));
            }
        }
        let pos = parse_marked(&self.t_pos)?;
        let neg = parse_marked(&self.t_neg)?;
        let (Some((i, sp)), Some((k, sn))) = (&pos.span, &neg.span) else {
            return Err(invalid("both descriptions need a marked span".into()));
        };
        if *i != self.perturbed_index || *k != self.perturbed_index {
            return Err(invalid(format!("span index {i}/{k} != perturbed index {}", self.perturbed_index)));
        }
        if pos.tokens[..sp.start] != neg.tokens[..sn.start]
            || pos.tokens[sp.end..] != neg.tokens[sn.end..]
        {
            return Err(invalid("descriptions differ outside the marked span".into()));
        }
        if pos.tokens[sp.clone()] == neg.tokens[sn.clone()] {
            return Err(invalid("marked spans are identical".into()));
        }
        Ok(())
    }

    pub fn text(&self, source: HypothesisSource) -> &str {
        match source {
            HypothesisSource::Original => &self.t_pos,
            HypothesisSource::Perturbed => &self.t_neg,
        }
    }

    /// Largest split position valid for both descriptions, plus one.
    pub fn split_limit(&self) -> Result<usize, FateError> {
        let a = parse_marked(&self.t_pos)?.tokens.len();
        let b = parse_marked(&self.t_neg)?.tokens.len();
        Ok(a.min(b))
    }
}

/// Cuts one description of `instance` after `t` tokens and labels each cell.
pub fn split_hypotheses(
    instance: &FateInstance,
    instance_index: usize,
    t: usize,
    source: HypothesisSource,
) -> Result<HypothesisPair, FateError> {
    let marked = parse_marked(instance.text(source))?;
    let len = marked.tokens.len();
    if t < 1 || t >= len {
        return Err(FateError::SplitOutOfRange { t, len });
    }
    let span = marked.span.as_ref().map(|(_, r)| r.clone());
    let labels = (0..instance.f_pos.len())
        .map(|j| {
            let contradicting = source == HypothesisSource::Perturbed && j == instance.perturbed_index;
            match (&span, contradicting) {
                (Some(r), true) => [r.start >= t, r.end <= t],
                _ => [true, true],
            }
        })
        .collect();
    Ok(HypothesisPair {
        instance: instance_index,
        split: t,
        source,
        triples: instance.f_pos.clone(),
        backward: marked.tokens[..t].join(" "),
        forward: marked.tokens[t..].join(" "),
        labels,
    })
}

/// Up-samples the minority label class by duplicating whole pairs until
/// both classes hold the same number of pairs. A pair belongs to the
/// unsupported class when any of its cells is unsupported.
pub fn balance_labels(pairs: Vec<HypothesisPair>, seed: u64) -> Result<Vec<HypothesisPair>, FateError> {
    let (neg, pos): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| pairs[i].has_unsupported());
    if pos.is_empty() {
        return Err(FateError::SingleLabel("unsupported"));
    }
    if neg.is_empty() {
        return Err(FateError::SingleLabel("supported"));
    }
    let (mut minority, deficit) = if pos.len() < neg.len() {
        (pos.clone(), neg.len() - pos.len())
    } else {
        (neg.clone(), pos.len() - neg.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    minority.shuffle(&mut rng);
    let extra: Vec<HypothesisPair> = minority
        .iter()
        .cycle()
        .take(deficit)
        .map(|&i| pairs[i].clone())
        .collect();
    let mut out = pairs;
    out.extend(extra);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "count")]
pub enum SplitPolicy {
    /// This many uniformly drawn split points per description pair.
    Random(usize),
    /// Every valid split point.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FateConfig {
    pub splits: SplitPolicy,
    pub seed: u64,
    /// Sampling weights for subject, relation, object.
    pub position_weights: [f64; 3],
    pub balance: bool,
}

impl Default for FateConfig {
    fn default() -> Self {
        Self {
            splits: SplitPolicy::Random(1),
            seed: 7,
            position_weights: [1.0, 1.0, 1.0],
            balance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FateDataset {
    pub instances: Vec<FateInstance>,
    pub pairs: Vec<HypothesisPair>,
    pub dictionary: PerturbationDictionary,
}

fn coverage_gaps(
    corpus: &[K2TInstance],
    pools: &PerturbationPools,
    templates: &TemplateSet,
    weights: &[f64; 3],
) -> Vec<String> {
    let mut gaps = std::collections::BTreeSet::new();
    for inst in corpus {
        for t in inst.facts.iter() {
            if templates.get(t.relation()).is_none() {
                gaps.insert(format!("missing template for relation `{}`", t.relation()));
            }
            for (p, w) in Position::ALL.into_iter().zip(weights) {
                if *w > 0.0 && pools.get(p, t.field(p)).is_empty() {
                    gaps.insert(format!("empty {p} pool for `{}`", t.field(p)));
                }
            }
        }
    }
    gaps.into_iter().collect()
}

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn choose_position<R: Rng>(rng: &mut R, weights: &[f64; 3]) -> Position {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen_range(0.0..total);
    for (p, w) in Position::ALL.into_iter().zip(weights) {
        if x < *w {
            return p;
        }
        x -= w;
    }
    Position::Object
}

fn synthesize_one(
    index: usize,
    inst: &K2TInstance,
    pools: &PerturbationPools,
    templates: &TemplateSet,
    config: &FateConfig,
) -> Result<(FateInstance, Vec<HypothesisPair>, PerturbationDictionary), FateError> {
    let mut rng = instance_rng(config.seed, index);
    let mut dict = PerturbationDictionary::new();
    let f_pos = inst.facts.triples().to_vec();
    for t in &f_pos {
        dict.register(t);
    }
    let j = rng.gen_range(0..f_pos.len());
    let position = choose_position(&mut rng, &config.position_weights);
    let pool = pools.get(position, f_pos[j].field(position));
    let mut f_neg = f_pos.clone();
    f_neg[j] = perturb_triple(&f_pos[j], position, &pool, &mut rng, &mut dict)?;
    let fate = FateInstance::render(f_pos, f_neg, templates, j, position)?;
    let limit = fate.split_limit()?;
    let splits: Vec<usize> = match config.splits {
        SplitPolicy::All => (1..limit).collect(),
        SplitPolicy::Random(n) => (0..n).map(|_| rng.gen_range(1..limit)).collect(),
    };
    let mut pairs = Vec::with_capacity(2 * splits.len());
    for t in splits {
        pairs.push(split_hypotheses(&fate, index, t, HypothesisSource::Original)?);
        pairs.push(split_hypotheses(&fate, index, t, HypothesisSource::Perturbed)?);
    }
    Ok((fate, pairs, dict))
}

/// Synthesizes one FATE tuple and its hypothesis pairs per corpus instance.
/// Output order follows the corpus regardless of scheduling.
pub fn build_fate(
    corpus: &[K2TInstance],
    pools: &PerturbationPools,
    templates: &TemplateSet,
    config: &FateConfig,
) -> Result<FateDataset, FateError> {
    let gaps = coverage_gaps(corpus, pools, templates, &config.position_weights);
    if !gaps.is_empty() {
        return Err(FateError::Coverage(gaps));
    }
    let parts = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| synthesize_one(i, inst, pools, templates, config))
        .collect::<Result<Vec<_>, _>>()?;
    let mut instances = Vec::with_capacity(parts.len());
    let mut pairs = Vec::new();
    let mut dictionary = PerturbationDictionary::new();
    for (fate, p, dict) in parts {
        instances.push(fate);
        pairs.extend(p);
        dictionary.merge(&dict);
    }
    if config.balance && !pairs.is_empty() {
        pairs = balance_labels(pairs, config.seed)?;
    }
    Ok(FateDataset {
        instances,
        pairs,
        dictionary,
    })
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records always serialize"));
        out.push('\n');
    }
    out
}

fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, FateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FateError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn instances_to_jsonl(instances: &[FateInstance]) -> String {
    to_jsonl(instances)
}

pub fn pairs_to_jsonl(pairs: &[HypothesisPair]) -> String {
    to_jsonl(pairs)
}

pub fn read_instances(path: &Path) -> Result<Vec<FateInstance>, FateError> {
    let items: Vec<FateInstance> = from_jsonl(&fs::read_to_string(path)?)?;
    for inst in &items {
        inst.validate()?;
    }
    Ok(items)
}

pub fn read_pairs(path: &Path) -> Result<Vec<HypothesisPair>, FateError> {
    from_jsonl(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::FactList;

    fn ireland() -> FactTriple {
        FactTriple::new("Ireland", "largest_city", "Dublin").unwrap()
    }

    fn dublin_templates() -> TemplateSet {
        let mut t = TemplateSet::new();
        t.insert("largest_city", "{obj} is {subj}'s {rel}").unwrap();
        t
    }

    fn dublin_instance() -> FateInstance {
        let neg = FactTriple::new("Ireland", "national_capital", "Dublin").unwrap();
        FateInstance::render(vec![ireland()], vec![neg], &dublin_templates(), 0, Position::Relation).unwrap()
    }

    #[test]
    fn perturbs_relation_from_pool() {
        let mut dict = PerturbationDictionary::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = perturb_triple(&ireland(), Position::Relation, &["national_capital".into()], &mut rng, &mut dict).unwrap();
        assert_eq!(out, FactTriple::new("Ireland", "national_capital", "Dublin").unwrap());
        assert_eq!(dict.get(&ireland()).unwrap().len(), 1);
    }

    #[test]
    fn pool_of_one_and_empty_pool() {
        let mut dict = PerturbationDictionary::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let out = perturb_triple(&ireland(), Position::Subject, &["Eire".into()], &mut rng, &mut dict).unwrap();
            assert_eq!(out.subject(), "Eire");
        }
        let err = perturb_triple(&ireland(), Position::Object, &["Dublin".into()], &mut rng, &mut dict);
        assert!(matches!(err, Err(FateError::EmptyPool { .. })));
    }

    #[test]
    fn seeded_perturbation_is_deterministic() {
        let pool: Vec<String> = (0..10).map(|i| format!("City{i}")).collect();
        let run = || {
            let mut dict = PerturbationDictionary::new();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..5)
                .map(|_| perturb_triple(&ireland(), Position::Object, &pool, &mut rng, &mut dict).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn renders_dublin_marks() {
        let text = render_description(
            &[ireland()],
            &dublin_templates(),
            Some(Mark {
                index: 0,
                position: Position::Relation,
            }),
        )
        .unwrap();
        assert_eq!(text, "Dublin is Ireland's <S0> largest city </S0>");
        let plain = render_description(&[ireland()], &dublin_templates(), None).unwrap();
        assert_eq!(plain, "Dublin is Ireland's largest city");
        assert!(!plain.contains("<S"));
        assert_eq!(dublin_instance().t_neg, "Dublin is Ireland's <S0> national capital </S0>");
    }

    #[test]
    fn missing_and_bad_templates() {
        let other = FactTriple::new("a", "b", "c").unwrap();
        assert!(matches!(
            render_description(&[other], &dublin_templates(), None),
            Err(FateError::MissingTemplate(_))
        ));
        let mut t = TemplateSet::new();
        assert!(t.insert("r", "{subj} {obj}").is_err());
        assert!(t.insert("r", "{subj}{rel} {obj}").is_err());
        assert!(t.insert("r", "{subj} {rel} {obj} {obj}").is_err());
    }

    #[test]
    fn dublin_split_labels() {
        let inst = dublin_instance();
        let neg = split_hypotheses(&inst, 0, 4, HypothesisSource::Perturbed).unwrap();
        assert_eq!(neg.backward, "Dublin is Ireland's national");
        assert_eq!(neg.forward, "capital");
        assert_eq!(neg.labels, vec![[false, false]]);
        let pos = split_hypotheses(&inst, 0, 4, HypothesisSource::Original).unwrap();
        assert_eq!(pos.backward, "Dublin is Ireland's largest");
        assert_eq!(pos.labels, vec![[true, true]]);
    }

    #[test]
    fn split_before_span() {
        let inst = dublin_instance();
        let p = split_hypotheses(&inst, 0, 2, HypothesisSource::Perturbed).unwrap();
        assert_eq!(p.labels, vec![[true, false]]);
        assert!(matches!(
            split_hypotheses(&inst, 0, 0, HypothesisSource::Perturbed),
            Err(FateError::SplitOutOfRange { t: 0, len: 5 })
        ));
        assert!(split_hypotheses(&inst, 0, 5, HypothesisSource::Original).is_err());
    }

    #[test]
    fn marks_parsing() {
        let m = parse_marked("a <S1> b c </S1> d").unwrap();
        assert_eq!(m.tokens, ["a", "b", "c", "d"]);
        assert_eq!(m.span, Some((1, 1..3)));
        assert!(parse_marked("a <S1> b </S2>").is_err());
        assert!(parse_marked("a <S1> b").is_err());
        assert!(parse_marked("a <S1> </S1>").is_err());
        assert!(parse_marked("</S0> a").is_err());
        assert_eq!(parse_marked("plain text").unwrap().span, None);
    }

    fn labeled(unsupported: bool) -> HypothesisPair {
        HypothesisPair {
            instance: 0,
            split: 1,
            source: HypothesisSource::Original,
            triples: vec![ireland()],
            backward: "a".into(),
            forward: "b".into(),
            labels: vec![[!unsupported, true]],
        }
    }

    #[test]
    fn balancing() {
        let even: Vec<_> = (0..20).map(|i| labeled(i % 2 == 0)).collect();
        assert_eq!(balance_labels(even.clone(), 1).unwrap(), even);

        let skewed: Vec<_> = (0..15).map(|i| labeled(i >= 5)).collect();
        let out = balance_labels(skewed, 1).unwrap();
        let sup = out.iter().filter(|p| !p.has_unsupported()).count();
        let uns = out.len() - sup;
        assert_eq!((sup, uns), (10, 10));
        let ratio = sup as f64 / uns as f64;
        assert!((0.9..=1.1).contains(&ratio));

        assert!(matches!(balance_labels(vec![labeled(false)], 1), Err(FateError::SingleLabel(_))));
    }

    #[test]
    fn builds_two_pairs_per_split() {
        let corpus = vec![K2TInstance::new(FactList::new(vec![ireland()]).unwrap(), vec![])];
        let mut pools = PerturbationPools::new();
        pools.add(Position::Relation, "largest_city", ["national_capital".to_string()]);
        let config = FateConfig {
            position_weights: [0.0, 1.0, 0.0],
            ..FateConfig::default()
        };
        let ds = build_fate(&corpus, &pools, &dublin_templates(), &config).unwrap();
        assert_eq!(ds.instances.len(), 1);
        assert_eq!(ds.pairs.len(), 2);
        assert!(ds.instances[0].validate().is_ok());
        let again = build_fate(&corpus, &pools, &dublin_templates(), &config).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn coverage_gaps_are_listed_together() {
        let corpus = vec![K2TInstance::new(
            FactList::new(vec![ireland(), FactTriple::new("x", "y", "z").unwrap()]).unwrap(),
            vec![],
        )];
        let err = build_fate(&corpus, &PerturbationPools::new(), &dublin_templates(), &FateConfig::default()).unwrap_err();
        match err {
            FateError::Coverage(gaps) => assert!(gaps.len() >= 6, "{gaps:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pair_labels_serialize_as_bits() {
        let p = labeled(true);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains(r#""labels":[[0,1]]"#), "{json}");
        let back: HypothesisPair = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
