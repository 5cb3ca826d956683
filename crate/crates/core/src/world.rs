//! Synthetic knowledge worlds for hermetic experiments.
//!
//! Entities are fresh pseudo-words (consonant-vowel syllables), so every
//! instance has its own triples. Each relation comes with a template and
//! two distractor relations whose words appear nowhere else; each entity
//! gets two distractor names ending in `x`, which no genuine name does.
//! These disjointness properties make the rule oracle agree exactly with
//! span-derived labels.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Perturbation, PerturbationDictionary};
use crate::fate::{build_fate, parse_marked, FateConfig, FateDataset, FateError, PerturbationPools, SplitPolicy, TemplateSet};
use crate::knowledge::{FactList, FactTriple, K2TInstance, Position};
use crate::lm::{LmError, ToyLm};
use crate::surface::normalized;

pub struct RelationSpec {
    pub name: &'static str,
    pub template: &'static str,
    pub distractors: [&'static str; 2],
}

pub const RELATIONS: [RelationSpec; 8] = [
    RelationSpec {
        name: "largest_city",
        template: "{obj} is {subj}'s {rel}",
        distractors: ["national_capital", "oldest_harbor"],
    },
    RelationSpec {
        name: "birth_place",
        template: "the {rel} of {subj} is {obj}",
        distractors: ["burial_ground", "summer_residence"],
    },
    RelationSpec {
        name: "home_stadium",
        template: "{subj} lists {obj} under {rel}",
        distractors: ["training_venue", "rival_arena"],
    },
    RelationSpec {
        name: "main_river",
        template: "{subj}'s {rel} is {obj}",
        distractors: ["northern_lake", "frozen_glacier"],
    },
    RelationSpec {
        name: "chief_export",
        template: "{subj} has {obj} as its {rel}",
        distractors: ["banned_import", "rare_mineral"],
    },
    RelationSpec {
        name: "leader_name",
        template: "{obj} is the {rel} for {subj}",
        distractors: ["deputy_title", "former_regent"],
    },
    RelationSpec {
        name: "official_language",
        template: "{subj} records {obj} as {rel}",
        distractors: ["ancient_dialect", "trade_pidgin"],
    },
    RelationSpec {
        name: "founding_year",
        template: "{subj} notes {obj} as its {rel}",
        distractors: ["closing_decade", "census_period"],
    },
];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const SYLLABLES: usize = 14 * 5;
const NAME_SPACE: usize = SYLLABLES * SYLLABLES * SYLLABLES;
const NAME_STRIDE: usize = 7919;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub instances: usize,
    pub min_triples: usize,
    pub max_triples: usize,
    /// Probability that an entity name has two words.
    pub two_word_rate: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            min_triples: 1,
            max_triples: 4,
            two_word_rate: 0.3,
            seed: 0,
        }
    }
}

/// A generated corpus with everything needed to perturb and verify it.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub corpus: Vec<K2TInstance>,
    pub pools: PerturbationPools,
    pub templates: TemplateSet,
    /// Every corpus triple with every pool alternative recorded.
    pub dictionary: PerturbationDictionary,
}

struct Names {
    next: usize,
    offset: usize,
}

impl Names {
    fn word(&mut self) -> String {
        assert!(self.next < NAME_SPACE, "pseudo-word space exhausted");
        let mut code = (self.next * NAME_STRIDE + self.offset) % NAME_SPACE;
        self.next += 1;
        let mut word = String::with_capacity(6);
        for _ in 0..3 {
            let s = code % SYLLABLES;
            code /= SYLLABLES;
            word.push(CONSONANTS[s / VOWELS.len()] as char);
            word.push(VOWELS[s % VOWELS.len()] as char);
        }
        let mut chars = word.chars();
        let first = chars.next().expect("non-empty").to_ascii_uppercase();
        std::iter::once(first).chain(chars).collect()
    }

    fn entity<R: Rng>(&mut self, rng: &mut R, two_word_rate: f64) -> String {
        if rng.gen_bool(two_word_rate) {
            format!("{} {}", self.word(), self.word())
        } else {
            self.word()
        }
    }

    /// Distractor with the same word count as `entity`; every word ends in `x`.
    fn distractor(&mut self, entity: &str) -> String {
        entity
            .split_whitespace()
            .map(|_| format!("{}x", self.word()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn templates() -> TemplateSet {
    let mut t = TemplateSet::new();
    for r in &RELATIONS {
        t.insert(r.name, r.template).expect("built-in templates are valid");
    }
    t
}

pub fn generate_world(config: &WorldConfig) -> World {
    assert!(config.min_triples >= 1 && config.min_triples <= config.max_triples);
    assert!(config.max_triples <= RELATIONS.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut names = Names {
        next: 0,
        offset: rng.gen_range(0..NAME_SPACE),
    };
    let mut pools = PerturbationPools::new();
    let mut dictionary = PerturbationDictionary::new();
    let mut corpus = Vec::with_capacity(config.instances);
    let templates = templates();
    for _ in 0..config.instances {
        let m = rng.gen_range(config.min_triples..=config.max_triples);
        let relations: Vec<&RelationSpec> = RELATIONS.choose_multiple(&mut rng, m).collect();
        let mut triples = Vec::with_capacity(m);
        for rel in relations {
            let subject = names.entity(&mut rng, config.two_word_rate);
            let object = names.entity(&mut rng, config.two_word_rate);
            let triple = FactTriple::new(&subject, rel.name, &object).expect("generated fields are valid");
            let alternatives = [
                (Position::Subject, subject.clone(), [names.distractor(&subject), names.distractor(&subject)]),
                (Position::Relation, rel.name.to_owned(), rel.distractors.map(str::to_owned)),
                (Position::Object, object.clone(), [names.distractor(&object), names.distractor(&object)]),
            ];
            dictionary.register(&triple);
            for (position, original, alts) in alternatives {
                for alt in &alts {
                    dictionary.record(
                        &triple,
                        Perturbation {
                            position,
                            original: original.clone(),
                            replacement: alt.clone(),
                        },
                    );
                }
                pools.add(position, &original, alts);
            }
            triples.push(triple);
        }
        let facts = FactList::new(triples).expect("m >= 1");
        let reference = crate::fate::render_description(facts.triples(), &templates, None)
            .expect("every relation has a template");
        corpus.push(K2TInstance::new(facts, vec![reference]));
    }
    World {
        corpus,
        pools,
        templates,
        dictionary,
    }
}

/// Normalized words of templates and genuine relations.
pub fn genuine_vocabulary(world: &World) -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    for (_, template) in world.templates.iter() {
        let stripped = template
            .replace("{subj}", " ")
            .replace("{rel}", " ")
            .replace("{obj}", " ");
        words.extend(normalized(&stripped));
    }
    for inst in &world.corpus {
        for t in inst.facts.iter() {
            for p in Position::ALL {
                words.extend(crate::surface::normalized_field(t.field(p), p));
            }
        }
    }
    words
}

/// Normalized words of every registered replacement form.
pub fn distractor_vocabulary(world: &World) -> BTreeSet<String> {
    let mut words = BTreeSet::new();
    for triple in world.dictionary.triples() {
        for p in world.dictionary.get(triple).unwrap_or_default() {
            words.extend(crate::surface::normalized_field(&p.replacement, p.position));
        }
    }
    words
}

/// Shared words between genuine text and distractors; empty for a sound world.
pub fn vocabulary_overlap(world: &World) -> Vec<String> {
    let genuine = genuine_vocabulary(world);
    distractor_vocabulary(world)
        .intersection(&genuine)
        .cloned()
        .collect()
}

/// FATE synthesis over a world's corpus.
pub fn synthesize(world: &World, splits: SplitPolicy, seed: u64) -> Result<FateDataset, FateError> {
    let config = FateConfig {
        splits,
        seed,
        ..FateConfig::default()
    };
    build_fate(&world.corpus, &world.pools, &world.templates, &config)
}

/// Training pairs for a toy LM biased toward hallucination: each instance
/// contributes its faithful description once and a singly perturbed
/// description `bias` times.
pub fn adversarial_lm_corpus(world: &World, bias: usize, seed: u64) -> Result<Vec<(FactList, String)>, FateError> {
    let fate = synthesize(world, SplitPolicy::Random(0), seed)?;
    let mut out = Vec::with_capacity(world.corpus.len() * (1 + bias));
    for (inst, f) in world.corpus.iter().zip(&fate.instances) {
        let faithful = parse_marked(&f.t_pos)?.tokens.join(" ");
        let perturbed = parse_marked(&f.t_neg)?.tokens.join(" ");
        out.push((inst.facts.clone(), faithful));
        for _ in 0..bias {
            out.push((inst.facts.clone(), perturbed.clone()));
        }
    }
    Ok(out)
}

/// Adversarial toy LM used by the faithfulness experiments.
pub fn adversarial_lm(world: &World, bias: usize, order: usize, smoothing: f64, seed: u64) -> Result<ToyLm, LmError> {
    let corpus = adversarial_lm_corpus(world, bias, seed).map_err(|e| LmError::InvalidModel(e.to_string()))?;
    ToyLm::train(&corpus, order, smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worlds_are_disjoint_and_deterministic() {
        let cfg = WorldConfig {
            instances: 300,
            ..WorldConfig::default()
        };
        let w = generate_world(&cfg);
        assert!(vocabulary_overlap(&w).is_empty(), "{:?}", vocabulary_overlap(&w));
        assert_eq!(w, generate_world(&cfg));
        assert_eq!(w.corpus.len(), 300);
        for inst in &w.corpus {
            assert!((1..=4).contains(&inst.facts.len()));
            let rels: BTreeSet<&str> = inst.facts.iter().map(|t| t.relation()).collect();
            assert_eq!(rels.len(), inst.facts.len());
        }
    }

    #[test]
    fn entities_are_fresh() {
        let w = generate_world(&WorldConfig::default());
        let mut seen = BTreeSet::new();
        for inst in &w.corpus {
            for t in inst.facts.iter() {
                assert!(seen.insert(t.subject().to_owned()));
                assert!(seen.insert(t.object().to_owned()));
            }
        }
    }

    #[test]
    fn adversarial_corpus_shape() {
        let w = generate_world(&WorldConfig {
            instances: 5,
            ..WorldConfig::default()
        });
        let c = adversarial_lm_corpus(&w, 2, 1).unwrap();
        assert_eq!(c.len(), 15);
        assert_eq!(c[0].1, w.corpus[0].references[0]);
        assert_ne!(c[1].1, c[0].1);
        assert_eq!(c[1], c[2]);
    }
}
