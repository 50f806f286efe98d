//! TCF-like policy bit strings and compact header words.
//!
//! Full policy layout, every field MSB first, zero padded to a byte:
//!
//! | field         | width                                   |
//! |---------------|-----------------------------------------|
//! | version       | 6                                       |
//! | vocabulary    | 8                                       |
//! | purposes      | one bit per purpose concept             |
//! | data          | one bit per personal-data concept       |
//! | controllers   | 12-bit count, then 12 bits each         |
//! | legal basis   | 2 bits per set purpose bit              |
//!
//! Bitfields follow the vocabulary's flatten order restricted to the
//! relevant concept kind.

mod base64url;
pub(crate) mod bits;
mod word;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{ConceptKind, Registry, Vocabulary};
use bits::{unpack, BitReader, BitWriter};

pub use base64url::{decode_base64url, encode_base64url};
pub use word::{decode_stripped, strip_for_header, CompactWord, FieldMask, StrippedPolicy};

pub const VERSION_BITS: usize = 6;
pub const VOCAB_BITS: usize = 8;
pub const CONTROLLER_BITS: usize = 12;
pub const COUNT_BITS: usize = 12;
pub const LEGAL_BASIS_BITS: usize = 2;
pub const MAX_CONTROLLER: u16 = (1 << CONTROLLER_BITS) - 1;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("input truncated: need {needed} bits, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown vocabulary {0}")]
    UnknownVocabulary(u8),
    #[error("non-canonical encoding: {0}")]
    NonCanonical(String),
    #[error("{field} bitfield has {found} bits, vocabulary defines {expected}")]
    WidthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("field mask must keep the purposes field")]
    EmptyMask,
    #[error("compact word has no terminator bit")]
    MissingTerminator,
    #[error("illegal base64url character {character:?} at offset {position}")]
    Alphabet { position: usize, character: char },
    #[error("base64url input has an impossible length")]
    Base64Length,
    #[error("payload ends inside a concept code")]
    TrailingPartialCode,
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
}

/// Two-bit legal basis attached to each set purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegalBasisCode {
    Consent = 0,
    LegitimateInterest = 1,
    Contract = 2,
    Other = 3,
}

impl LegalBasisCode {
    fn from_bits(v: u32) -> Self {
        match v & 0b11 {
            0 => Self::Consent,
            1 => Self::LegitimateInterest,
            2 => Self::Contract,
            _ => Self::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyBitString {
    pub version: u8,
    pub vocab: u8,
    pub purposes: Vec<bool>,
    pub data_categories: Vec<bool>,
    /// Strictly ascending 12-bit controller numbers.
    pub controllers: Vec<u16>,
    /// One entry per set purpose bit, in purpose index order.
    pub legal_basis: Vec<LegalBasisCode>,
}

/// `purpose` using `data` for `controller`, all from one vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompositePurposeId {
    pub purpose: String,
    pub data: String,
    pub controller: u16,
}

impl PolicyBitString {
    /// A policy with every field cleared, sized for `vocab`.
    pub fn empty(version: u8, vocab: &Vocabulary) -> Self {
        PolicyBitString {
            version,
            vocab: vocab.registry_id(),
            purposes: vec![false; vocab.count_kind(ConceptKind::Purpose)],
            data_categories: vec![false; vocab.count_kind(ConceptKind::PersonalData)],
            controllers: Vec::new(),
            legal_basis: Vec::new(),
        }
    }

    /// The policy naming exactly one composite purpose.
    pub fn from_composite(
        version: u8,
        vocab: &Vocabulary,
        id: &CompositePurposeId,
        basis: LegalBasisCode,
    ) -> Result<Self, CodecError> {
        let mut p = Self::empty(version, vocab);
        let purpose = index_of(vocab, ConceptKind::Purpose, &id.purpose)?;
        let data = index_of(vocab, ConceptKind::PersonalData, &id.data)?;
        p.purposes[purpose] = true;
        p.data_categories[data] = true;
        p.controllers.push(id.controller);
        p.legal_basis.push(basis);
        p.check_controllers()?;
        Ok(p)
    }

    pub fn set_purpose_count(&self) -> usize {
        self.purposes.iter().filter(|b| **b).count()
    }

    fn check_controllers(&self) -> Result<(), CodecError> {
        if self.controllers.len() > usize::from(MAX_CONTROLLER) {
            return Err(CodecError::InvalidPolicy("too many controllers".into()));
        }
        if let Some(c) = self.controllers.iter().find(|c| **c > MAX_CONTROLLER) {
            return Err(CodecError::InvalidPolicy(format!(
                "controller {c} exceeds 12 bits"
            )));
        }
        if self.controllers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CodecError::NonCanonical(
                "controllers must be strictly ascending".into(),
            ));
        }
        Ok(())
    }

    /// Check every invariant against the vocabulary the policy names.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), CodecError> {
        if self.version >= 1 << VERSION_BITS {
            return Err(CodecError::InvalidPolicy(format!(
                "version {} exceeds 6 bits",
                self.version
            )));
        }
        if self.vocab != vocab.registry_id() {
            return Err(CodecError::UnknownVocabulary(self.vocab));
        }
        let widths = [
            (
                "purposes",
                vocab.count_kind(ConceptKind::Purpose),
                self.purposes.len(),
            ),
            (
                "data_categories",
                vocab.count_kind(ConceptKind::PersonalData),
                self.data_categories.len(),
            ),
        ];
        for (field, expected, found) in widths {
            if expected != found {
                return Err(CodecError::WidthMismatch {
                    field,
                    expected,
                    found,
                });
            }
        }
        self.check_controllers()?;
        if self.legal_basis.len() != self.set_purpose_count() {
            return Err(CodecError::InvalidPolicy(format!(
                "{} legal basis entries for {} set purposes",
                self.legal_basis.len(),
                self.set_purpose_count()
            )));
        }
        Ok(())
    }

    fn write_fields(&self, w: &mut BitWriter, mask: FieldMask) {
        if mask.contains(FieldMask::PURPOSES) {
            w.write_bits(&self.purposes);
        }
        if mask.contains(FieldMask::DATA) {
            w.write_bits(&self.data_categories);
        }
        if mask.contains(FieldMask::CONTROLLERS) {
            w.write(self.controllers.len() as u32, COUNT_BITS);
            for &c in &self.controllers {
                w.write(u32::from(c), CONTROLLER_BITS);
            }
        }
        if mask.contains(FieldMask::LEGAL_BASIS) {
            for &lb in &self.legal_basis {
                w.write(lb as u32, LEGAL_BASIS_BITS);
            }
        }
    }
}

fn index_of(vocab: &Vocabulary, kind: ConceptKind, id: &str) -> Result<usize, CodecError> {
    vocab
        .flatten_kind(kind)
        .iter()
        .position(|c| *c == id)
        .ok_or_else(|| CodecError::UnknownConcept(id.to_owned()))
}

fn lookup(registry: &Registry, id: u8) -> Result<&Vocabulary, CodecError> {
    registry.get(id).ok_or(CodecError::UnknownVocabulary(id))
}

/// Canonical byte encoding of a policy.
pub fn encode_policy(policy: &PolicyBitString, registry: &Registry) -> Result<Vec<u8>, CodecError> {
    let vocab = lookup(registry, policy.vocab)?;
    policy.validate(vocab)?;
    let mut w = BitWriter::new();
    w.write(u32::from(policy.version), VERSION_BITS);
    w.write(u32::from(policy.vocab), VOCAB_BITS);
    policy.write_fields(&mut w, FieldMask::all());
    Ok(w.into_bytes())
}

pub fn decode_policy(bytes: &[u8], registry: &Registry) -> Result<PolicyBitString, CodecError> {
    let bits = unpack(bytes);
    let mut r = BitReader::new(&bits);
    let version = r.read(VERSION_BITS)? as u8;
    let vocab_id = r.read(VOCAB_BITS)? as u8;
    let vocab = lookup(registry, vocab_id)?;
    let fields = read_fields(&mut r, vocab, FieldMask::all())?;
    // Only zero padding, and less than a byte of it, may follow.
    let rest = r.rest();
    if rest.len() >= 8 || rest.iter().any(|b| *b) {
        return Err(CodecError::NonCanonical(
            "trailing data after policy".into(),
        ));
    }
    Ok(PolicyBitString {
        version,
        vocab: vocab_id,
        purposes: fields.purposes,
        data_categories: fields.data.unwrap_or_default(),
        controllers: fields.controllers.unwrap_or_default(),
        legal_basis: fields.legal_basis.unwrap_or_default(),
    })
}

pub(crate) struct Fields {
    pub purposes: Vec<bool>,
    pub data: Option<Vec<bool>>,
    pub controllers: Option<Vec<u16>>,
    pub legal_basis: Option<Vec<LegalBasisCode>>,
}

pub(crate) fn read_fields(
    r: &mut BitReader<'_>,
    vocab: &Vocabulary,
    mask: FieldMask,
) -> Result<Fields, CodecError> {
    let purposes = r.take(vocab.count_kind(ConceptKind::Purpose))?.to_vec();
    let data = if mask.contains(FieldMask::DATA) {
        Some(
            r.take(vocab.count_kind(ConceptKind::PersonalData))?
                .to_vec(),
        )
    } else {
        None
    };
    let controllers = if mask.contains(FieldMask::CONTROLLERS) {
        let n = r.read(COUNT_BITS)? as usize;
        let mut cs = Vec::with_capacity(n);
        for _ in 0..n {
            let c = r.read(CONTROLLER_BITS)? as u16;
            if cs.last().is_some_and(|prev| *prev >= c) {
                return Err(CodecError::NonCanonical(
                    "controllers not strictly ascending".into(),
                ));
            }
            cs.push(c);
        }
        Some(cs)
    } else {
        None
    };
    let legal_basis = if mask.contains(FieldMask::LEGAL_BASIS) {
        let n = purposes.iter().filter(|b| **b).count();
        let mut lb = Vec::with_capacity(n);
        for _ in 0..n {
            lb.push(LegalBasisCode::from_bits(r.read(LEGAL_BASIS_BITS)?));
        }
        Some(lb)
    } else {
        None
    };
    Ok(Fields {
        purposes,
        data,
        controllers,
        legal_basis,
    })
}

/// Human-editable JSON form of a policy, naming concepts by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub version: u8,
    pub vocab: u8,
    #[serde(default)]
    pub purposes: Vec<PurposeEntry>,
    #[serde(default)]
    pub data_categories: Vec<String>,
    #[serde(default)]
    pub controllers: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurposeEntry {
    pub id: String,
    #[serde(default = "consent_basis")]
    pub legal_basis: LegalBasisCode,
}

fn consent_basis() -> LegalBasisCode {
    LegalBasisCode::Consent
}

impl PolicyDocument {
    pub fn to_policy(&self, registry: &Registry) -> Result<PolicyBitString, CodecError> {
        let vocab = lookup(registry, self.vocab)?;
        let mut p = PolicyBitString::empty(self.version, vocab);
        let mut basis = vec![None; p.purposes.len()];
        for entry in &self.purposes {
            let i = index_of(vocab, ConceptKind::Purpose, &entry.id)?;
            if p.purposes[i] {
                return Err(CodecError::InvalidPolicy(format!(
                    "purpose `{}` listed twice",
                    entry.id
                )));
            }
            p.purposes[i] = true;
            basis[i] = Some(entry.legal_basis);
        }
        p.legal_basis = basis.into_iter().flatten().collect();
        let mut seen = HashSet::new();
        for d in &self.data_categories {
            if !seen.insert(d) {
                return Err(CodecError::InvalidPolicy(format!(
                    "data category `{d}` listed twice"
                )));
            }
            p.data_categories[index_of(vocab, ConceptKind::PersonalData, d)?] = true;
        }
        p.controllers = self.controllers.clone();
        p.controllers.sort_unstable();
        let before = p.controllers.len();
        p.controllers.dedup();
        if p.controllers.len() != before {
            return Err(CodecError::InvalidPolicy("controller listed twice".into()));
        }
        p.validate(vocab)?;
        Ok(p)
    }

    /// Canonical document: concepts in flatten order, controllers ascending.
    pub fn from_policy(p: &PolicyBitString, registry: &Registry) -> Result<Self, CodecError> {
        let vocab = lookup(registry, p.vocab)?;
        p.validate(vocab)?;
        let purpose_ids = vocab.flatten_kind(ConceptKind::Purpose);
        let data_ids = vocab.flatten_kind(ConceptKind::PersonalData);
        let purposes = purpose_ids
            .iter()
            .zip(&p.purposes)
            .filter(|(_, set)| **set)
            .zip(&p.legal_basis)
            .map(|((id, _), lb)| PurposeEntry {
                id: (*id).to_owned(),
                legal_basis: *lb,
            })
            .collect();
        let data_categories = data_ids
            .iter()
            .zip(&p.data_categories)
            .filter(|(_, set)| **set)
            .map(|(id, _)| (*id).to_owned())
            .collect();
        Ok(PolicyDocument {
            version: p.version,
            vocab: p.vocab,
            purposes,
            data_categories,
            controllers: p.controllers.clone(),
        })
    }
}
