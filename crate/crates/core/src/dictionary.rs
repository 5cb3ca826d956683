//! Registry of field perturbations, keyed by the original triple.
//!
//! FATE synthesis writes it, the rule oracle and the HVM featurizer read it.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::knowledge::{FactTriple, Position};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Perturbation {
    pub position: Position,
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationDictionary {
    entries: BTreeMap<FactTriple, Vec<Perturbation>>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    triple: FactTriple,
    perturbations: Vec<Perturbation>,
}

impl PerturbationDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes a triple known to the registry without any perturbation.
    pub fn register(&mut self, triple: &FactTriple) {
        self.entries.entry(triple.clone()).or_default();
    }

    pub fn record(&mut self, triple: &FactTriple, perturbation: Perturbation) {
        let list = self.entries.entry(triple.clone()).or_default();
        if !list.contains(&perturbation) {
            list.push(perturbation);
            list.sort();
        }
    }

    pub fn get(&self, triple: &FactTriple) -> Option<&[Perturbation]> {
        self.entries.get(triple).map(Vec::as_slice)
    }

    pub fn contains(&self, triple: &FactTriple) -> bool {
        self.entries.contains_key(triple)
    }

    pub fn triples(&self) -> impl Iterator<Item = &FactTriple> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn perturbation_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn merge(&mut self, other: &PerturbationDictionary) {
        for (triple, list) in &other.entries {
            self.register(triple);
            for p in list {
                self.record(triple, p.clone());
            }
        }
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<Entry> = self
            .entries
            .iter()
            .map(|(triple, perturbations)| Entry {
                triple: triple.clone(),
                perturbations: perturbations.clone(),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("dictionary always serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let entries: Vec<Entry> = serde_json::from_str(text)?;
        let mut dict = Self::new();
        for entry in entries {
            dict.register(&entry.triple);
            for p in entry.perturbations {
                dict.record(&entry.triple, p);
            }
        }
        Ok(dict)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let t = FactTriple::new("Ireland", "largest_city", "Dublin").unwrap();
        let mut dict = PerturbationDictionary::new();
        dict.record(
            &t,
            Perturbation {
                position: Position::Relation,
                original: "largest_city".into(),
                replacement: "national_capital".into(),
            },
        );
        dict.register(&FactTriple::new("a", "b", "c").unwrap());
        let back = PerturbationDictionary::from_json(&dict.to_json()).unwrap();
        assert_eq!(back, dict);
        assert_eq!(back.len(), 2);
        assert_eq!(back.perturbation_count(), 1);
    }
}
