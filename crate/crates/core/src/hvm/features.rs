use crate::dictionary::PerturbationDictionary;
use crate::knowledge::{FactTriple, Position};
use crate::surface::{contains_form, normalized, normalized_field, touches_form};
use crate::verifier::HypothesisKind;

pub const FEATURE_DIM: usize = 9;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "subject_overlap",
    "relation_overlap",
    "object_overlap",
    "subject_contradiction",
    "relation_contradiction",
    "object_contradiction",
    "length_bucket",
    "forward_kind",
    "bias",
];

const LENGTH_BUCKET_WIDTH: usize = 4;
const LENGTH_BUCKETS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

fn overlap_rate(hyp: &[String], field: &[String]) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    let hits = field.iter().filter(|tok| hyp.contains(tok)).count();
    hits as f64 / field.len() as f64
}

fn contradiction_hit(
    hyp: &[String],
    triple: &FactTriple,
    position: Position,
    dictionary: &PerturbationDictionary,
) -> f64 {
    let hit = dictionary.get(triple).is_some_and(|list| {
        list.iter().filter(|p| p.position == position).any(|p| {
            touches_form(hyp, &normalized_field(&p.replacement, position))
                && !contains_form(hyp, &normalized_field(&p.original, position))
        })
    });
    if hit {
        1.0
    } else {
        0.0
    }
}

pub fn featurize(
    triple: &FactTriple,
    hypothesis: &str,
    kind: HypothesisKind,
    dictionary: &PerturbationDictionary,
) -> FeatureVector {
    let hyp = normalized(hypothesis);
    let mut out = [0.0; FEATURE_DIM];
    for (i, position) in Position::ALL.into_iter().enumerate() {
        let field = normalized_field(triple.field(position), position);
        out[i] = overlap_rate(&hyp, &field);
        out[3 + i] = contradiction_hit(&hyp, triple, position, dictionary);
    }
    let bucket = (hypothesis.split_whitespace().count() / LENGTH_BUCKET_WIDTH).min(LENGTH_BUCKETS - 1);
    out[6] = bucket as f64 / (LENGTH_BUCKETS - 1) as f64;
    out[7] = match kind {
        HypothesisKind::Backward => 0.0,
        HypothesisKind::Forward => 1.0,
    };
    out[8] = 1.0;
    FeatureVector(out)
}
