use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::matching::ancestors;
use crate::taxonomy::{ConceptKind, Registry, Vocabulary};

/// A named party with its 12-bit controller number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Party {
    pub name: String,
    pub number: u16,
}

/// One machine-readable consent request from a controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRequest {
    pub id: String,
    pub purpose: String,
    /// The broader concept `purpose` was expanded from. Mandatory when
    /// `purpose` is not a registered concept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub vocab: u8,
    #[serde(default)]
    pub personal_data: Vec<String>,
    #[serde(default)]
    pub processing: Vec<String>,
    pub controller: Party,
    #[serde(default)]
    pub recipients: Vec<Party>,
    pub legal_basis: String,
    #[serde(default)]
    pub measures: Vec<String>,
    /// Derived from the personal data concepts; recomputed on validation.
    #[serde(default)]
    pub special_category: bool,
}

/// Request as it appears on the wire; vocabulary and controller fall back to
/// the document-level values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestEntry {
    pub id: String,
    pub purpose: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<u8>,
    #[serde(default)]
    pub personal_data: Vec<String>,
    #[serde(default)]
    pub processing: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<Party>,
    #[serde(default)]
    pub recipients: Vec<Party>,
    #[serde(default = "default_legal_basis")]
    pub legal_basis: String,
    #[serde(default)]
    pub measures: Vec<String>,
}

fn default_legal_basis() -> String {
    "Consent".to_owned()
}

/// The consent-requests resource a website links from its response headers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestDocument {
    pub version: u32,
    pub vocab: u8,
    pub controller: Party,
    #[serde(default)]
    pub requests: Vec<RequestEntry>,
}

impl RequestDocument {
    pub fn from_requests(vocab: u8, controller: Party, requests: &[ConsentRequest]) -> Self {
        RequestDocument {
            version: 1,
            vocab,
            controller: controller.clone(),
            requests: requests
                .iter()
                .map(|r| RequestEntry {
                    id: r.id.clone(),
                    purpose: r.purpose.clone(),
                    parent: r.parent.clone(),
                    vocab: (r.vocab != vocab).then_some(r.vocab),
                    personal_data: r.personal_data.clone(),
                    processing: r.processing.clone(),
                    controller: (r.controller != controller).then(|| r.controller.clone()),
                    recipients: r.recipients.clone(),
                    legal_basis: r.legal_basis.clone(),
                    measures: r.measures.clone(),
                })
                .collect(),
        }
    }

    /// Requests with document defaults filled in, not yet validated.
    pub fn requests(&self) -> Vec<ConsentRequest> {
        self.requests
            .iter()
            .map(|e| ConsentRequest {
                id: e.id.clone(),
                purpose: e.purpose.clone(),
                parent: e.parent.clone(),
                vocab: e.vocab.unwrap_or(self.vocab),
                personal_data: e.personal_data.clone(),
                processing: e.processing.clone(),
                controller: e
                    .controller
                    .clone()
                    .unwrap_or_else(|| self.controller.clone()),
                recipients: e.recipients.clone(),
                legal_basis: e.legal_basis.clone(),
                measures: e.measures.clone(),
                special_category: false,
            })
            .collect()
    }
}

impl ConsentRequest {
    /// Check the request against its vocabulary and derive `special_category`.
    ///
    /// Errors with [`SignalError::UnknownVocabulary`] when the vocabulary is
    /// not registered locally; callers downgrade such requests to prompts.
    pub fn validate(&mut self, registry: &Registry) -> Result<(), SignalError> {
        let vocab = registry
            .get(self.vocab)
            .ok_or(SignalError::UnknownVocabulary(self.vocab))?;
        let schema = |field: &'static str, message: String| SignalError::Schema {
            request: self.id.clone(),
            field,
            message,
        };
        if self.id.is_empty() {
            return Err(schema("id", "empty request id".into()));
        }
        if vocab.contains(&self.purpose) {
            if let Some(parent) = &self.parent {
                let ok = ancestors(vocab, &self.purpose)
                    .map(|a| a.iter().any(|(id, d)| *d > 0 && id == parent))
                    .unwrap_or(false);
                if !ok {
                    return Err(schema(
                        "parent",
                        format!("`{parent}` is not an ancestor of `{}`", self.purpose),
                    ));
                }
            }
        } else {
            match &self.parent {
                None => {
                    return Err(schema(
                        "parent",
                        format!("custom purpose `{}` needs a parent concept", self.purpose),
                    ))
                }
                Some(p) if !vocab.contains(p) => {
                    return Err(schema("parent", format!("unknown parent concept `{p}`")))
                }
                Some(_) => {}
            }
        }
        if !is_consent_basis(vocab, &self.legal_basis) {
            return Err(schema(
                "legal_basis",
                format!("`{}` is not a consent legal basis", self.legal_basis),
            ));
        }
        self.special_category = self.personal_data.iter().any(|d| is_special(vocab, d));
        Ok(())
    }
}

fn is_consent_basis(vocab: &Vocabulary, basis: &str) -> bool {
    if basis.eq_ignore_ascii_case("consent") {
        return true;
    }
    match vocab.get(basis) {
        Some(c) if c.kind == ConceptKind::LegalBasis => ancestors(vocab, basis)
            .map(|a| a.iter().any(|(id, _)| id.eq_ignore_ascii_case("consent")))
            .unwrap_or(false),
        _ => false,
    }
}

/// A personal-data concept is special when it, or any ancestor, is flagged.
pub(crate) fn is_special(vocab: &Vocabulary, id: &str) -> bool {
    ancestors(vocab, id)
        .map(|a| {
            a.iter()
                .any(|(c, _)| vocab.get(c).is_some_and(|n| n.special_category))
        })
        .unwrap_or(false)
}
