//! Fact triples, linearization, and corpus I/O.
//!
//! A corpus is a list of [`K2TInstance`]s. The canonical on-disk format is
//! JSONL with one record per line:
//!
//! ```text
//! {"facts": [["Ireland", "largest_city", "Dublin"]], "references": ["Dublin is Ireland's largest city"]}
//! ```
//!
//! A TSV variant is accepted for quick hand-written corpora: leading columns
//! of the form `subj|rel|obj` are triples, every following column is a
//! reference.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker tokens reserved for linearization.
pub const SUBJECT_MARKER: &str = "<H>";
pub const RELATION_MARKER: &str = "<R>";
pub const OBJECT_MARKER: &str = "<T>";

const MARKERS: [&str; 3] = [SUBJECT_MARKER, RELATION_MARKER, OBJECT_MARKER];

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("triple field `{field}` is empty")]
    EmptyField { field: &'static str },
    #[error("triple field `{field}` contains reserved marker token {marker}")]
    ReservedMarker {
        field: &'static str,
        marker: &'static str,
    },
    #[error("a fact list needs at least one triple")]
    EmptyFactList,
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Which slot of a triple a surface form occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Subject,
    Relation,
    Object,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Subject, Position::Relation, Position::Object];

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Subject => "subject",
            Position::Relation => "relation",
            Position::Object => "object",
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single `<subj, rel, obj>` fact.
///
/// Fields are trimmed and internal whitespace runs are collapsed to one
/// space, so two triples that linearize identically compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactTriple {
    subject: String,
    relation: String,
    object: String,
}

fn canonical_field(raw: &str, field: &'static str) -> Result<String, KnowledgeError> {
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(KnowledgeError::EmptyField { field });
    }
    for marker in MARKERS {
        if tokens.contains(&marker) {
            return Err(KnowledgeError::ReservedMarker { field, marker });
        }
    }
    Ok(tokens.join(" "))
}

impl FactTriple {
    pub fn new(
        subject: impl AsRef<str>,
        relation: impl AsRef<str>,
        object: impl AsRef<str>,
    ) -> Result<Self, KnowledgeError> {
        Ok(Self {
            subject: canonical_field(subject.as_ref(), "subject")?,
            relation: canonical_field(relation.as_ref(), "relation")?,
            object: canonical_field(object.as_ref(), "object")?,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn field(&self, position: Position) -> &str {
        match position {
            Position::Subject => &self.subject,
            Position::Relation => &self.relation,
            Position::Object => &self.object,
        }
    }

    /// Returns a copy with one field replaced.
    pub fn with_field(&self, position: Position, value: &str) -> Result<Self, KnowledgeError> {
        let mut out = self.clone();
        let value = canonical_field(value, position.as_str())?;
        match position {
            Position::Subject => out.subject = value,
            Position::Relation => out.relation = value,
            Position::Object => out.object = value,
        }
        Ok(out)
    }

    /// `<H> subj <R> rel <T> obj`
    pub fn linearize(&self) -> String {
        format!(
            "{SUBJECT_MARKER} {} {RELATION_MARKER} {} {OBJECT_MARKER} {}",
            self.subject, self.relation, self.object
        )
    }

    /// Plain `subj rel obj`, used as NLI premise material.
    pub fn plain(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }
}

impl fmt::Display for FactTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

impl Serialize for FactTriple {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [&self.subject, &self.relation, &self.object].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FactTriple {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [s, r, o] = <[String; 3]>::deserialize(deserializer)?;
        FactTriple::new(s, r, o).map_err(serde::de::Error::custom)
    }
}

/// Ordered, non-empty list of input facts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct FactList(Vec<FactTriple>);

impl FactList {
    pub fn new(triples: Vec<FactTriple>) -> Result<Self, KnowledgeError> {
        if triples.is_empty() {
            return Err(KnowledgeError::EmptyFactList);
        }
        Ok(Self(triples))
    }

    pub fn triples(&self) -> &[FactTriple] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FactTriple> {
        self.0.iter()
    }

    /// Per-triple linearizations joined by a single space.
    pub fn linearize(&self) -> String {
        self.0
            .iter()
            .map(FactTriple::linearize)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl<'de> Deserialize<'de> for FactList {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let triples = Vec::<FactTriple>::deserialize(deserializer)?;
        FactList::new(triples).map_err(serde::de::Error::custom)
    }
}

impl<'a> IntoIterator for &'a FactList {
    type Item = &'a FactTriple;
    type IntoIter = std::slice::Iter<'a, FactTriple>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub fn linearize(facts: &FactList) -> String {
    facts.linearize()
}

/// One knowledge-to-text example: input facts plus zero or more references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct K2TInstance {
    pub facts: FactList,
    #[serde(default)]
    pub references: Vec<String>,
}

impl K2TInstance {
    pub fn new(facts: FactList, references: Vec<String>) -> Self {
        Self { facts, references }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Tsv,
}

impl DatasetFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => DatasetFormat::Tsv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    facts: Vec<serde_json::Value>,
    #[serde(default)]
    references: Vec<String>,
}

fn schema(line: usize, message: impl Into<String>) -> KnowledgeError {
    KnowledgeError::Schema {
        line,
        message: message.into(),
    }
}

fn triple_from_value(value: &serde_json::Value, line: usize) -> Result<FactTriple, KnowledgeError> {
    const NAMES: [&str; 3] = ["subject", "relation", "object"];
    let mut fields: [Option<String>; 3] = [None, None, None];
    match value {
        serde_json::Value::Array(items) => {
            if items.len() > 3 {
                return Err(schema(line, format!("triple has {} fields, expected 3", items.len())));
            }
            for (slot, item) in fields.iter_mut().zip(items) {
                match item {
                    serde_json::Value::String(s) => *slot = Some(s.clone()),
                    other => return Err(schema(line, format!("triple field is not a string: {other}"))),
                }
            }
        }
        serde_json::Value::Object(map) => {
            for (slot, name) in fields.iter_mut().zip(NAMES) {
                if let Some(v) = map.get(name) {
                    match v.as_str() {
                        Some(s) => *slot = Some(s.to_owned()),
                        None => return Err(schema(line, format!("field `{name}` is not a string"))),
                    }
                }
            }
        }
        other => return Err(schema(line, format!("triple must be an array or object, got {other}"))),
    }
    for (slot, name) in fields.iter().zip(NAMES) {
        if slot.is_none() {
            return Err(schema(line, format!("missing `{name}` field")));
        }
    }
    let [s, r, o] = fields.map(Option::unwrap);
    FactTriple::new(s, r, o).map_err(|e| schema(line, e.to_string()))
}

/// Parses JSONL corpus text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<K2TInstance>, KnowledgeError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(raw).map_err(|e| schema(line, format!("malformed record: {e}")))?;
        let triples = record
            .facts
            .iter()
            .map(|v| triple_from_value(v, line))
            .collect::<Result<Vec<_>, _>>()?;
        let facts = FactList::new(triples).map_err(|e| schema(line, e.to_string()))?;
        out.push(K2TInstance::new(facts, record.references));
    }
    Ok(out)
}

/// Parses TSV corpus text.
pub fn parse_tsv(text: &str) -> Result<Vec<K2TInstance>, KnowledgeError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut triples = Vec::new();
        let mut references = Vec::new();
        for column in raw.split('\t') {
            let parts: Vec<&str> = column.split('|').collect();
            if references.is_empty() && parts.len() == 3 {
                let triple = FactTriple::new(parts[0], parts[1], parts[2])
                    .map_err(|e| schema(line, e.to_string()))?;
                triples.push(triple);
            } else {
                references.push(column.to_owned());
            }
        }
        if triples.is_empty() {
            return Err(schema(line, "no `subj|rel|obj` triple columns"));
        }
        out.push(K2TInstance::new(FactList::new(triples)?, references));
    }
    Ok(out)
}

pub fn parse_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<K2TInstance>, KnowledgeError> {
    let text = fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
        path: path.to_owned(),
        source,
    })?;
    match format {
        DatasetFormat::Jsonl => parse_jsonl(&text),
        DatasetFormat::Tsv => parse_tsv(&text),
    }
}

pub fn to_jsonl(instances: &[K2TInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).expect("instances always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, instances: &[K2TInstance]) -> io::Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(to_jsonl(instances).as_bytes())?;
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(s: &str, r: &str, o: &str) -> FactTriple {
        FactTriple::new(s, r, o).unwrap()
    }

    #[test]
    fn linearize_single_triple() {
        let facts = FactList::new(vec![triple("Ireland", "largest_city", "Dublin")]).unwrap();
        assert_eq!(linearize(&facts), "<H> Ireland <R> largest_city <T> Dublin");
    }

    #[test]
    fn linearize_joins_with_single_space() {
        let a = triple("Ireland", "largest_city", "Dublin");
        let b = triple("Dublin", "country", "Ireland");
        let facts = FactList::new(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(facts.linearize(), format!("{} {}", a.linearize(), b.linearize()));
    }

    #[test]
    fn multi_word_object_kept_verbatim() {
        let t = triple("Aleksandr Chumakov", "related Mean Of Transportation", "Aston Martin DBS");
        assert!(t.linearize().ends_with("<T> Aston Martin DBS"));
    }

    #[test]
    fn whitespace_is_canonicalized() {
        assert_eq!(triple("  a   b ", "r", "o"), triple("a b", "r", "o"));
        assert!(matches!(
            FactTriple::new("  ", "r", "o"),
            Err(KnowledgeError::EmptyField { field: "subject" })
        ));
    }

    #[test]
    fn markers_rejected() {
        let err = FactTriple::new("a <R> b", "r", "o").unwrap_err();
        assert!(matches!(err, KnowledgeError::ReservedMarker { marker: "<R>", .. }));
        // Substrings are not marker tokens.
        assert!(FactTriple::new("a<R>b", "r", "o").is_ok());
    }

    #[test]
    fn empty_input_parses_to_empty_list() {
        assert!(parse_jsonl("").unwrap().is_empty());
        assert!(parse_tsv("").unwrap().is_empty());
    }

    #[test]
    fn parses_single_record() {
        let text = r#"{"facts": [["Ireland", "largest_city", "Dublin"]], "references": ["Dublin is Ireland's largest city"]}"#;
        let parsed = parse_jsonl(text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].facts.len(), 1);
        assert_eq!(parsed[0].references.len(), 1);
    }

    #[test]
    fn missing_relation_names_line() {
        let text = concat!(
            r#"{"facts": [["a", "b", "c"]]}"#,
            "\n",
            r#"{"facts": [{"subject": "a", "object": "c"}]}"#,
            "\n"
        );
        let err = parse_jsonl(text).unwrap_err();
        match err {
            KnowledgeError::Schema { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("relation"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn marker_in_record_is_schema_error() {
        let text = r#"{"facts": [["a", "<T>", "c"]]}"#;
        assert!(matches!(parse_jsonl(text), Err(KnowledgeError::Schema { line: 1, .. })));
    }

    #[test]
    fn tsv_triples_then_references() {
        let text = "Ireland|largest_city|Dublin\tDublin|country|Ireland\tDublin is big\tsecond ref\n";
        let parsed = parse_tsv(text).unwrap();
        assert_eq!(parsed[0].facts.len(), 2);
        assert_eq!(parsed[0].references, vec!["Dublin is big", "second ref"]);
    }

    #[test]
    fn parse_dataset_reports_io() {
        let err = parse_dataset(Path::new("/nonexistent/corpus.jsonl"), DatasetFormat::Jsonl).unwrap_err();
        assert!(matches!(err, KnowledgeError::Io { .. }));
    }
}
