use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_vocabulary_file, ConceptRef, TaxonomyError, Vocabulary, VocabularyDocument};

/// How the `to` concept relates to the `from` concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    #[serde(alias = "Equivalent")]
    Equivalent,
    /// `to` is narrower than `from`.
    #[serde(alias = "Narrower")]
    Narrower,
    /// `to` is broader than `from`.
    #[serde(alias = "Broader")]
    Broader,
}

impl Relation {
    pub fn inverse(self) -> Relation {
        match self {
            Relation::Equivalent => Relation::Equivalent,
            Relation::Narrower => Relation::Broader,
            Relation::Broader => Relation::Narrower,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMapping {
    pub from: ConceptRef,
    pub to: ConceptRef,
    pub relation: Relation,
}

/// Either a path (relative to the registry file) or an inline document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VocabularySource {
    Path(String),
    Inline(VocabularyDocument),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryDocument {
    pub vocabularies: Vec<VocabularySource>,
    #[serde(default)]
    pub mappings: Vec<ConceptMapping>,
}

/// Registered vocabularies plus explicit cross-vocabulary mappings.
///
/// Ids are 7-bit, so a registry holds at most 128 vocabularies.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    vocabularies: BTreeMap<u8, Vocabulary>,
    mappings: Vec<ConceptMapping>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a registry file; vocabulary paths resolve relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.to_owned(),
            source,
        })?;
        let doc: RegistryDocument = serde_json::from_str(&text)?;
        Self::from_document(doc, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_document(doc: RegistryDocument, base: &Path) -> Result<Self, TaxonomyError> {
        let mut reg = Registry::new();
        for src in doc.vocabularies {
            let vocab = match src {
                VocabularySource::Path(p) => load_vocabulary_file(base.join(p))?,
                VocabularySource::Inline(d) => Vocabulary::from_document(d)?,
            };
            reg.insert(vocab)?;
        }
        for m in doc.mappings {
            reg.add_mapping(m)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, vocab: Vocabulary) -> Result<(), TaxonomyError> {
        let id = vocab.registry_id();
        if self.vocabularies.contains_key(&id) {
            return Err(TaxonomyError::DuplicateRegistryId(id));
        }
        self.vocabularies.insert(id, vocab);
        Ok(())
    }

    pub fn add_mapping(&mut self, m: ConceptMapping) -> Result<(), TaxonomyError> {
        let invalid = |reason| TaxonomyError::InvalidMapping {
            from: m.from.clone(),
            to: m.to.clone(),
            reason,
        };
        if m.from.vocab() == m.to.vocab() {
            return Err(invalid("both ends in the same vocabulary"));
        }
        for end in [&m.from, &m.to] {
            let v = self
                .get(end.vocab())
                .ok_or_else(|| invalid("vocabulary not registered"))?;
            if !v.contains(end.id()) {
                return Err(invalid("concept not in its vocabulary"));
            }
        }
        if !self.mappings.contains(&m) {
            self.mappings.push(m);
        }
        Ok(())
    }

    pub fn get(&self, id: u8) -> Option<&Vocabulary> {
        self.vocabularies.get(&id)
    }

    pub fn vocabulary(&self, id: u8) -> Result<&Vocabulary, TaxonomyError> {
        self.get(id).ok_or(TaxonomyError::UnknownVocabulary(id))
    }

    pub fn vocabularies(&self) -> impl Iterator<Item = &Vocabulary> {
        self.vocabularies.values()
    }

    pub fn mappings(&self) -> &[ConceptMapping] {
        &self.mappings
    }

    /// Look a concept up across vocabularies.
    pub fn concept(&self, c: &ConceptRef) -> Option<&super::ConceptNode> {
        self.get(c.vocab()).and_then(|v| v.get(c.id()))
    }

    /// Every concept directly mapped to or from `concept`, with the relation
    /// read from `concept`'s side.
    pub fn related(&self, concept: &ConceptRef) -> Vec<(ConceptRef, Relation)> {
        self.mappings
            .iter()
            .filter_map(|m| {
                if &m.from == concept {
                    Some((m.to.clone(), m.relation))
                } else if &m.to == concept {
                    Some((m.from.clone(), m.relation.inverse()))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Direct mappings of `concept` into `target`, sorted by `(id, relation)`.
    ///
    /// Stored mappings are read in both directions, the reverse reading
    /// taking the inverse relation. No transitive closure is taken.
    pub fn translate(
        &self,
        concept: &ConceptRef,
        target: u8,
    ) -> Result<Vec<(String, Relation)>, TaxonomyError> {
        let vocab = self.vocabulary(concept.vocab())?;
        if !vocab.contains(concept.id()) {
            return Err(TaxonomyError::UnknownConcept {
                vocab: concept.vocab(),
                id: concept.id().to_owned(),
            });
        }
        self.vocabulary(target)?;
        let mut out: Vec<(String, Relation)> = self
            .related(concept)
            .into_iter()
            .filter(|(c, _)| c.vocab() == target)
            .map(|(c, rel)| (c.1, rel))
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::load_vocabulary;

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.insert(
            load_vocabulary(
                r#"{"registry_id":2,"name":"dpv","version":1,"concepts":[
                {"id":"Marketing","label":"Marketing","kind":"Purpose"},
                {"id":"Advertising","label":"Advertising","kind":"Purpose","parents":["Marketing"]},
                {"id":"Personalisation","label":"Personalisation","kind":"Purpose"}]}"#,
            )
            .unwrap(),
        )
        .unwrap();
        r.insert(
            load_vocabulary(
                r#"{"registry_id":127,"name":"tcf","version":2,"concepts":[
                {"id":"P3","label":"Personalised ads profile","kind":"Purpose"},
                {"id":"P11","label":"Marketing communications","kind":"Purpose"},
                {"id":"P1","label":"Device access","kind":"Purpose"}]}"#,
            )
            .unwrap(),
        )
        .unwrap();
        for (from, to, rel) in [
            ("P11", "Marketing", Relation::Equivalent),
            ("P3", "Personalisation", Relation::Broader),
            ("P3", "Advertising", Relation::Broader),
        ] {
            r.add_mapping(ConceptMapping {
                from: ConceptRef::new(127, from),
                to: ConceptRef::new(2, to),
                relation: rel,
            })
            .unwrap();
        }
        r
    }

    #[test]
    fn equivalent_mapping_both_ways() {
        let r = registry();
        assert_eq!(
            r.translate(&ConceptRef::new(127, "P11"), 2).unwrap(),
            vec![("Marketing".to_owned(), Relation::Equivalent)]
        );
        assert_eq!(
            r.translate(&ConceptRef::new(2, "Marketing"), 127).unwrap(),
            vec![("P11".to_owned(), Relation::Equivalent)]
        );
    }

    #[test]
    fn unmapped_and_multi_target() {
        let r = registry();
        assert!(r
            .translate(&ConceptRef::new(127, "P1"), 2)
            .unwrap()
            .is_empty());
        assert_eq!(
            r.translate(&ConceptRef::new(127, "P3"), 2).unwrap(),
            vec![
                ("Advertising".to_owned(), Relation::Broader),
                ("Personalisation".to_owned(), Relation::Broader)
            ]
        );
        // the reverse reading is Narrower
        assert_eq!(
            r.translate(&ConceptRef::new(2, "Advertising"), 127)
                .unwrap(),
            vec![("P3".to_owned(), Relation::Narrower)]
        );
    }

    #[test]
    fn lookup_errors() {
        let r = registry();
        assert!(matches!(
            r.translate(&ConceptRef::new(9, "X"), 2),
            Err(TaxonomyError::UnknownVocabulary(9))
        ));
        assert!(matches!(
            r.translate(&ConceptRef::new(2, "X"), 127),
            Err(TaxonomyError::UnknownConcept { .. })
        ));
        assert!(matches!(
            r.translate(&ConceptRef::new(2, "Marketing"), 5),
            Err(TaxonomyError::UnknownVocabulary(5))
        ));
    }

    #[test]
    fn invalid_mappings_rejected() {
        let mut r = registry();
        let same = ConceptMapping {
            from: ConceptRef::new(2, "Marketing"),
            to: ConceptRef::new(2, "Advertising"),
            relation: Relation::Narrower,
        };
        assert!(r.add_mapping(same).is_err());
        let dangling = ConceptMapping {
            from: ConceptRef::new(2, "Marketing"),
            to: ConceptRef::new(127, "P99"),
            relation: Relation::Equivalent,
        };
        assert!(r.add_mapping(dangling).is_err());
    }

    #[test]
    fn duplicate_registry_id() {
        let mut r = registry();
        let v = load_vocabulary(r#"{"registry_id":2,"name":"x","version":1}"#).unwrap();
        assert!(matches!(
            r.insert(v),
            Err(TaxonomyError::DuplicateRegistryId(2))
        ));
    }

    #[test]
    fn relation_wire_names() {
        let m: ConceptMapping = serde_json::from_str(
            r#"{"from":[127,"P11"],"to":[2,"Marketing"],"relation":"equivalent"}"#,
        )
        .unwrap();
        assert_eq!(m.relation, Relation::Equivalent);
        assert_eq!(m.from, ConceptRef::new(127, "P11"));
    }
}
