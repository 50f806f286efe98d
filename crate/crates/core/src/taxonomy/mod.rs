//! Purpose taxonomies, flat-list codebooks and the vocabulary registry.
//!
//! A [`Vocabulary`] is a DAG of concepts (purposes, personal data categories,
//! legal bases, ...) identified by an 8-bit registry id. Vocabularies are
//! validated once at load time and are immutable afterwards.

mod codebook;
mod registry;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codebook::{build_codebook, BitCode, Codebook, CodebookDocument, CodebookEntry};
pub use registry::{ConceptMapping, Registry, RegistryDocument, Relation, VocabularySource};

/// Highest registry id a vocabulary may claim. `0xFF` marks "unregistered".
pub const MAX_REGISTRY_ID: u8 = 127;
pub const UNREGISTERED: u8 = 0xFF;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed vocabulary document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cycle in parent relation through concept `{concept}`")]
    Cycle { concept: String },
    #[error("concept `{concept}` names unknown parent `{parent}`")]
    DanglingParent { concept: String, parent: String },
    #[error("duplicate concept id `{id}`")]
    DuplicateId { id: String },
    #[error("registry id {0} out of range (0..=127)")]
    InvalidRegistryId(i64),
    #[error("vocabulary version must be >= 1")]
    InvalidVersion,
    #[error("weight for `{concept}` must be finite and > 0, got {weight}")]
    InvalidWeight { concept: String, weight: f64 },
    #[error("cannot build a codebook for an empty vocabulary")]
    EmptyVocabulary,
    #[error("unknown vocabulary {0}")]
    UnknownVocabulary(u8),
    #[error("unknown concept `{id}` in vocabulary {vocab}")]
    UnknownConcept { vocab: u8, id: String },
    #[error("registry id {0} registered twice")]
    DuplicateRegistryId(u8),
    #[error("invalid mapping {from} -> {to}: {reason}")]
    InvalidMapping {
        from: ConceptRef,
        to: ConceptRef,
        reason: &'static str,
    },
}

/// A concept addressed across vocabularies: `(registry_id, concept id)`.
///
/// Serialized as a two-element JSON array, e.g. `[2, "Marketing"]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptRef(pub u8, pub String);

impl ConceptRef {
    pub fn new(vocab: u8, id: impl Into<String>) -> Self {
        ConceptRef(vocab, id.into())
    }

    pub fn vocab(&self) -> u8 {
        self.0
    }

    pub fn id(&self) -> &str {
        &self.1
    }

    /// Canonical string key, `"<registry_id>:<id>"`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.0, self.1)
    }
}

impl fmt::Display for ConceptRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConceptKind {
    #[serde(alias = "purpose")]
    Purpose,
    #[serde(alias = "personal_data", alias = "personalData")]
    PersonalData,
    #[serde(alias = "legal_basis", alias = "legalBasis")]
    LegalBasis,
    #[serde(alias = "recipient")]
    Recipient,
    #[serde(alias = "processing")]
    Processing,
    #[serde(alias = "measure")]
    Measure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Codec {
    /// Fixed-width enumeration over the flattened list.
    #[serde(rename = "enum")]
    #[default]
    Enumeration,
    /// Shannon-Fano prefix code over the flattened list.
    #[serde(rename = "sf")]
    ShannonFano,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptNode {
    pub id: String,
    pub label: String,
    pub parents: BTreeSet<String>,
    pub kind: ConceptKind,
    pub special_category: bool,
    pub weight: Option<f64>,
}

/// On-disk vocabulary format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabularyDocument {
    pub registry_id: i64,
    pub name: String,
    pub version: i64,
    #[serde(default)]
    pub codec: Codec,
    #[serde(default)]
    pub concepts: Vec<ConceptEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub id: String,
    pub label: String,
    pub kind: ConceptKind,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special_category: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// A validated vocabulary. Immutable once built.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    registry_id: u8,
    name: String,
    version: u32,
    codec: Codec,
    concepts: Vec<ConceptNode>,
    index: HashMap<String, usize>,
    flat: Vec<usize>,
    codebook: Option<Codebook>,
}

/// Parse and validate a vocabulary document.
pub fn load_vocabulary(source: &str) -> Result<Vocabulary, TaxonomyError> {
    let doc: VocabularyDocument = serde_json::from_str(source)?;
    Vocabulary::from_document(doc)
}

pub fn load_vocabulary_file(path: impl AsRef<Path>) -> Result<Vocabulary, TaxonomyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
        path: path.to_owned(),
        source,
    })?;
    load_vocabulary(&text)
}

impl Vocabulary {
    pub fn from_document(doc: VocabularyDocument) -> Result<Self, TaxonomyError> {
        if !(0..=i64::from(MAX_REGISTRY_ID)).contains(&doc.registry_id) {
            return Err(TaxonomyError::InvalidRegistryId(doc.registry_id));
        }
        if doc.version < 1 || doc.version > i64::from(u32::MAX) {
            return Err(TaxonomyError::InvalidVersion);
        }
        let mut concepts = Vec::with_capacity(doc.concepts.len());
        let mut index = HashMap::with_capacity(doc.concepts.len());
        for entry in doc.concepts {
            if index.contains_key(&entry.id) {
                return Err(TaxonomyError::DuplicateId { id: entry.id });
            }
            if let Some(w) = entry.weight {
                if !(w.is_finite() && w > 0.0) {
                    return Err(TaxonomyError::InvalidWeight {
                        concept: entry.id,
                        weight: w,
                    });
                }
            }
            index.insert(entry.id.clone(), concepts.len());
            concepts.push(ConceptNode {
                id: entry.id,
                label: entry.label,
                parents: entry.parents.into_iter().collect(),
                kind: entry.kind,
                special_category: entry.special_category.unwrap_or(false),
                weight: entry.weight,
            });
        }
        for node in &concepts {
            if let Some(p) = node.parents.iter().find(|p| !index.contains_key(*p)) {
                return Err(TaxonomyError::DanglingParent {
                    concept: node.id.clone(),
                    parent: p.clone(),
                });
            }
        }
        let flat = topological_order(&concepts, &index)?;

        let mut vocab = Vocabulary {
            registry_id: doc.registry_id as u8,
            name: doc.name,
            version: doc.version as u32,
            codec: doc.codec,
            concepts,
            index,
            flat,
            codebook: None,
        };
        if !vocab.concepts.is_empty() {
            vocab.codebook = Some(build_codebook(&vocab, &Default::default())?);
        }
        Ok(vocab)
    }

    pub fn registry_id(&self) -> u8 {
        self.registry_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Concepts in document order.
    pub fn concepts(&self) -> &[ConceptNode] {
        &self.concepts
    }

    pub fn get(&self, id: &str) -> Option<&ConceptNode> {
        self.index.get(id).map(|&i| &self.concepts[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn concept_ref(&self, id: &str) -> ConceptRef {
        ConceptRef::new(self.registry_id, id)
    }

    /// Codebook built from the document's own weights, if the vocabulary has
    /// any concepts.
    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    /// Topological order of concept ids; parents first, ties by ascending id.
    pub fn flatten(&self) -> Vec<&str> {
        self.flat
            .iter()
            .map(|&i| self.concepts[i].id.as_str())
            .collect()
    }

    /// Flattened ids restricted to one concept kind. Policy bitfields are
    /// indexed by this order.
    pub fn flatten_kind(&self, kind: ConceptKind) -> Vec<&str> {
        self.flat
            .iter()
            .map(|&i| &self.concepts[i])
            .filter(|c| c.kind == kind)
            .map(|c| c.id.as_str())
            .collect()
    }

    pub fn count_kind(&self, kind: ConceptKind) -> usize {
        self.concepts.iter().filter(|c| c.kind == kind).count()
    }

    /// The document weight of a concept, defaulting to 1.
    pub fn weight(&self, id: &str) -> f64 {
        self.get(id).and_then(|c| c.weight).unwrap_or(1.0)
    }

    pub fn to_document(&self) -> VocabularyDocument {
        VocabularyDocument {
            registry_id: i64::from(self.registry_id),
            name: self.name.clone(),
            version: i64::from(self.version),
            codec: self.codec,
            concepts: self
                .concepts
                .iter()
                .map(|c| ConceptEntry {
                    id: c.id.clone(),
                    label: c.label.clone(),
                    kind: c.kind,
                    parents: c.parents.iter().cloned().collect(),
                    special_category: c.special_category.then_some(true),
                    weight: c.weight,
                })
                .collect(),
        }
    }
}

/// Kahn's algorithm with a min-heap on ids so ties come out lexicographically.
fn topological_order(
    concepts: &[ConceptNode],
    index: &HashMap<String, usize>,
) -> Result<Vec<usize>, TaxonomyError> {
    let mut pending: Vec<usize> = concepts.iter().map(|c| c.parents.len()).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); concepts.len()];
    for (i, c) in concepts.iter().enumerate() {
        for p in &c.parents {
            children[index[p]].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<(&str, usize)>> = concepts
        .iter()
        .enumerate()
        .filter(|(i, _)| pending[*i] == 0)
        .map(|(i, c)| Reverse((c.id.as_str(), i)))
        .collect();
    let mut order = Vec::with_capacity(concepts.len());
    while let Some(Reverse((_, i))) = ready.pop() {
        order.push(i);
        for &child in &children[i] {
            pending[child] -= 1;
            if pending[child] == 0 {
                ready.push(Reverse((concepts[child].id.as_str(), child)));
            }
        }
    }
    if order.len() == concepts.len() {
        return Ok(order);
    }

    // Every leftover node still has a leftover parent, so walking parents
    // from any leftover node must revisit a node that lies on a cycle.
    let leftover: HashSet<usize> = (0..concepts.len()).filter(|i| pending[*i] > 0).collect();
    let mut cur = *leftover
        .iter()
        .min_by_key(|&&i| concepts[i].id.as_str())
        .expect("leftover set is non-empty");
    let mut seen = HashSet::new();
    while seen.insert(cur) {
        cur = concepts[cur]
            .parents
            .iter()
            .map(|p| index[p])
            .find(|p| leftover.contains(p))
            .expect("leftover node has a leftover parent");
    }
    Err(TaxonomyError::Cycle {
        concept: concepts[cur].id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_json(concepts: &str) -> String {
        format!(r#"{{"registry_id":2,"name":"t","version":1,"concepts":[{concepts}]}}"#)
    }

    #[test]
    fn newsletter_edge_loads() {
        let v = load_vocabulary(&vocab_json(
            r#"{"id":"Marketing","label":"Marketing","kind":"Purpose"},
               {"id":"SendNewsletters","label":"Send newsletters","kind":"Purpose","parents":["Marketing"]}"#,
        ))
        .unwrap();
        assert_eq!(v.len(), 2);
        let sn = v.get("SendNewsletters").unwrap();
        assert_eq!(sn.parents.iter().collect::<Vec<_>>(), vec!["Marketing"]);
        assert_eq!(v.flatten(), vec!["Marketing", "SendNewsletters"]);
    }

    #[test]
    fn empty_vocabulary_is_valid() {
        let v = load_vocabulary(&vocab_json("")).unwrap();
        assert!(v.is_empty());
        assert!(v.codebook().is_none());
        assert!(v.flatten().is_empty());
    }

    #[test]
    fn two_cycle_is_named() {
        let err = load_vocabulary(&vocab_json(
            r#"{"id":"A","label":"a","kind":"Purpose","parents":["B"]},
               {"id":"B","label":"b","kind":"Purpose","parents":["A"]}"#,
        ))
        .unwrap_err();
        match err {
            TaxonomyError::Cycle { concept } => assert!(concept == "A" || concept == "B"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_behind_acyclic_prefix_names_cycle_member() {
        // R -> X -> Y -> Z -> X; only X, Y, Z are on the cycle.
        let err = load_vocabulary(&vocab_json(
            r#"{"id":"R","label":"r","kind":"Purpose"},
               {"id":"X","label":"x","kind":"Purpose","parents":["R","Z"]},
               {"id":"Y","label":"y","kind":"Purpose","parents":["X"]},
               {"id":"Z","label":"z","kind":"Purpose","parents":["Y"]},
               {"id":"W","label":"w","kind":"Purpose","parents":["Z"]}"#,
        ))
        .unwrap_err();
        match err {
            TaxonomyError::Cycle { concept } => {
                assert!(["X", "Y", "Z"].contains(&concept.as_str()), "{concept}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_and_duplicate_rejected() {
        let err = load_vocabulary(&vocab_json(
            r#"{"id":"A","label":"a","kind":"Purpose","parents":["Nope"]}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, TaxonomyError::DanglingParent { .. }));
        let err = load_vocabulary(&vocab_json(
            r#"{"id":"A","label":"a","kind":"Purpose"},{"id":"A","label":"a","kind":"Purpose"}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, TaxonomyError::DuplicateId { id } if id == "A"));
    }

    #[test]
    fn registry_id_bounds() {
        let doc = r#"{"registry_id":128,"name":"t","version":1,"concepts":[]}"#;
        assert!(matches!(
            load_vocabulary(doc),
            Err(TaxonomyError::InvalidRegistryId(128))
        ));
        let doc = r#"{"registry_id":2,"name":"t","version":0,"concepts":[]}"#;
        assert!(matches!(
            load_vocabulary(doc),
            Err(TaxonomyError::InvalidVersion)
        ));
    }

    #[test]
    fn roots_sorted_lexicographically() {
        let v = load_vocabulary(&vocab_json(
            r#"{"id":"B","label":"b","kind":"Purpose"},{"id":"A","label":"a","kind":"Purpose"}"#,
        ))
        .unwrap();
        assert_eq!(v.flatten(), vec!["A", "B"]);
    }

    #[test]
    fn multiple_parents_allowed() {
        let v = load_vocabulary(&vocab_json(
            r#"{"id":"Z","label":"z","kind":"Purpose"},
               {"id":"A","label":"a","kind":"Purpose"},
               {"id":"M","label":"m","kind":"Purpose","parents":["Z","A"]}"#,
        ))
        .unwrap();
        // M waits for Z even though it sorts before it.
        assert_eq!(v.flatten(), vec!["A", "Z", "M"]);
    }

    #[test]
    fn kind_aliases_accepted() {
        let v = load_vocabulary(&vocab_json(
            r#"{"id":"E","label":"e","kind":"personal_data","special_category":true}"#,
        ))
        .unwrap();
        assert_eq!(v.get("E").unwrap().kind, ConceptKind::PersonalData);
        assert!(v.get("E").unwrap().special_category);
    }
}
