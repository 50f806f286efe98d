//! Compact registry words for HTTP headers.
//!
//! A word is one vocabulary byte followed by a payload, a single `1`
//! terminator bit and zero padding to the next byte boundary. Dropping the
//! padding and the last set bit recovers the payload exactly.

use bitflags::bitflags;

use super::bits::{pack, unpack, BitReader, BitWriter};
use super::{lookup, read_fields, CodecError, LegalBasisCode, PolicyBitString};
use crate::taxonomy::{ConceptKind, Registry, Vocabulary};

bitflags! {
    /// Which policy fields a stripped header word keeps.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct FieldMask: u8 {
        const PURPOSES = 0b1000;
        const DATA = 0b0100;
        const CONTROLLERS = 0b0010;
        const LEGAL_BASIS = 0b0001;
    }
}

pub const MASK_BITS: usize = 4;

impl FieldMask {
    /// Parse a comma list such as `purposes,data`.
    pub fn parse_list(text: &str) -> Result<Self, String> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .try_fold(FieldMask::empty(), |acc, name| {
                let f = match name {
                    "purposes" => FieldMask::PURPOSES,
                    "data" | "data_categories" => FieldMask::DATA,
                    "controllers" => FieldMask::CONTROLLERS,
                    "legal_basis" => FieldMask::LEGAL_BASIS,
                    "all" => FieldMask::all(),
                    other => return Err(format!("unknown field `{other}`")),
                };
                Ok(acc | f)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactWord {
    pub vocab: u8,
    pub payload: Vec<bool>,
}

impl CompactWord {
    pub fn new(vocab: u8, payload: Vec<bool>) -> Self {
        CompactWord { vocab, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bits = Vec::with_capacity(8 + self.payload.len() + 8);
        bits.extend((0..8).rev().map(|i| (self.vocab >> i) & 1 == 1));
        bits.extend_from_slice(&self.payload);
        bits.push(true);
        pack(&bits)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let (&vocab, rest) = bytes.split_first().ok_or(CodecError::Truncated {
            needed: 8,
            available: 0,
        })?;
        match rest.last() {
            None => return Err(CodecError::MissingTerminator),
            Some(0) if rest.iter().all(|b| *b == 0) => return Err(CodecError::MissingTerminator),
            Some(0) => {
                return Err(CodecError::NonCanonical(
                    "padding longer than one byte".into(),
                ))
            }
            Some(_) => {}
        }
        let mut bits = unpack(rest);
        let last_one = bits
            .iter()
            .rposition(|b| *b)
            .expect("last byte is non-zero");
        bits.truncate(last_one);
        Ok(CompactWord {
            vocab,
            payload: bits,
        })
    }

    /// Payload made of the vocabulary's concept codes, in the given order.
    pub fn from_concepts<'a>(
        vocab: &Vocabulary,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, CodecError> {
        let mut payload = Vec::new();
        for id in ids {
            let code = vocab
                .codebook()
                .and_then(|cb| cb.encode(id))
                .ok_or_else(|| CodecError::UnknownConcept(id.to_owned()))?;
            payload.extend_from_slice(code.bits());
        }
        Ok(CompactWord::new(vocab.registry_id(), payload))
    }

    /// Decode a concept-code payload through the registered vocabulary.
    pub fn decode_concepts(&self, registry: &Registry) -> Result<Vec<String>, CodecError> {
        let vocab = lookup(registry, self.vocab)?;
        let mut ids = Vec::new();
        let mut rest = self.payload.as_slice();
        let Some(codebook) = vocab.codebook() else {
            return if rest.is_empty() {
                Ok(ids)
            } else {
                Err(CodecError::TrailingPartialCode)
            };
        };
        while !rest.is_empty() {
            let (id, used) = codebook
                .decode_prefix(rest)
                .ok_or(CodecError::TrailingPartialCode)?;
            ids.push(id.to_owned());
            rest = &rest[used..];
        }
        Ok(ids)
    }
}

/// Header word carrying only the fields in `keep`, behind a 4-bit field mask.
/// The version field is always dropped.
pub fn strip_for_header(
    policy: &PolicyBitString,
    keep: FieldMask,
    registry: &Registry,
) -> Result<CompactWord, CodecError> {
    if !keep.contains(FieldMask::PURPOSES) {
        return Err(CodecError::EmptyMask);
    }
    let vocab = lookup(registry, policy.vocab)?;
    policy.validate(vocab)?;
    let mut w = BitWriter::new();
    w.write(u32::from(keep.bits()), MASK_BITS);
    policy.write_fields(&mut w, keep);
    Ok(CompactWord::new(policy.vocab, w.into_bits()))
}

/// What a stripped header word still says about a policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrippedPolicy {
    pub vocab: u8,
    pub mask: FieldMask,
    pub purposes: Vec<bool>,
    pub data_categories: Option<Vec<bool>>,
    pub controllers: Option<Vec<u16>>,
    pub legal_basis: Option<Vec<LegalBasisCode>>,
}

impl StrippedPolicy {
    /// Ids of the set purposes in flatten order.
    pub fn purpose_ids<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        vocab
            .flatten_kind(ConceptKind::Purpose)
            .into_iter()
            .zip(&self.purposes)
            .filter(|(_, set)| **set)
            .map(|(id, _)| id)
            .collect()
    }
}

pub fn decode_stripped(
    word: &CompactWord,
    registry: &Registry,
) -> Result<StrippedPolicy, CodecError> {
    let vocab = lookup(registry, word.vocab)?;
    let mut r = BitReader::new(&word.payload);
    let mask = FieldMask::from_bits(r.read(MASK_BITS)? as u8)
        .filter(|m| m.contains(FieldMask::PURPOSES))
        .ok_or(CodecError::EmptyMask)?;
    let fields = read_fields(&mut r, vocab, mask)?;
    if r.remaining() != 0 {
        return Err(CodecError::NonCanonical("trailing payload bits".into()));
    }
    Ok(StrippedPolicy {
        vocab: word.vocab,
        mask,
        purposes: fields.purposes,
        data_categories: fields.data,
        controllers: fields.controllers,
        legal_basis: fields.legal_basis,
    })
}
