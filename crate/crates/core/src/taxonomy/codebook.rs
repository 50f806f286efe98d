use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Codec, TaxonomyError, Vocabulary};

/// A variable-length bit code, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitCode(Vec<bool>);

impl BitCode {
    pub fn new(bits: Vec<bool>) -> Self {
        BitCode(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_prefix_of(&self, other: &BitCode) -> bool {
        other.0.starts_with(&self.0)
    }

    fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    /// `value` written in `width` bits.
    fn fixed(value: usize, width: usize) -> Self {
        BitCode((0..width).rev().map(|i| (value >> i) & 1 == 1).collect())
    }
}

impl fmt::Display for BitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("invalid bit `{other}`")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitCode)
    }
}

impl Serialize for BitCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Concept id to prefix-free bit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codec: Codec,
    /// `(id, code, weight)` in flatten order.
    entries: Vec<(String, BitCode, f64)>,
    by_id: HashMap<String, usize>,
    by_code: HashMap<BitCode, usize>,
    max_len: usize,
}

/// Serialized form written by `taxonomy compile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookDocument {
    pub registry_id: u8,
    pub name: String,
    pub version: u32,
    pub codec: Codec,
    pub entries: Vec<CodebookEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub id: String,
    pub code: BitCode,
    pub weight: f64,
}

/// Build the codebook for `vocab` using its declared codec.
///
/// `weights` overrides the per-concept weights from the vocabulary document;
/// anything still missing weighs 1.
pub fn build_codebook(
    vocab: &Vocabulary,
    weights: &BTreeMap<String, f64>,
) -> Result<Codebook, TaxonomyError> {
    if vocab.is_empty() {
        return Err(TaxonomyError::EmptyVocabulary);
    }
    for (id, &w) in weights {
        if !vocab.contains(id) {
            return Err(TaxonomyError::UnknownConcept {
                vocab: vocab.registry_id(),
                id: id.clone(),
            });
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(TaxonomyError::InvalidWeight {
                concept: id.clone(),
                weight: w,
            });
        }
    }
    let ids = vocab.flatten();
    let w: Vec<f64> = ids
        .iter()
        .map(|id| {
            weights
                .get(*id)
                .copied()
                .unwrap_or_else(|| vocab.weight(id))
        })
        .collect();
    let codes = match vocab.codec() {
        Codec::Enumeration => enumeration_codes(ids.len()),
        Codec::ShannonFano => shannon_fano_codes(&w),
    };
    Ok(Codebook::from_parts(
        vocab.codec(),
        ids.into_iter()
            .map(str::to_owned)
            .zip(codes)
            .zip(w)
            .map(|((id, c), w)| (id, c, w)),
    ))
}

/// Fixed-width codes: the i-th concept gets `i` in `max(1, ceil(log2 n))` bits.
fn enumeration_codes(n: usize) -> Vec<BitCode> {
    let width = (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1) as usize;
    (0..n).map(|i| BitCode::fixed(i, width)).collect()
}

/// Shannon-Fano codes for `weights`, given in flatten order.
///
/// Items are ranked by descending weight (stable, so flatten order breaks
/// ties). Each run is split where the absolute difference between the two
/// halves' weight is smallest, preferring the smaller left half on ties; the
/// left half extends its prefix with 0, the right with 1.
///
/// The plain recursive split can hand a heavier item a longer code than a
/// lighter one that fell into the other half, so the resulting code words are
/// re-dealt shortest-first down the ranking. The code word set is unchanged.
fn shannon_fano_codes(weights: &[f64]) -> Vec<BitCode> {
    let n = weights.len();
    if n == 1 {
        return vec![BitCode::new(vec![false])];
    }
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &i in &ranked {
        prefix.push(prefix.last().unwrap() + weights[i]);
    }

    let mut split_codes = vec![BitCode::default(); n];
    let mut stack = vec![(0usize, n)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let mut best = lo + 1;
        let mut best_diff = f64::INFINITY;
        for s in lo + 1..hi {
            let left = prefix[s] - prefix[lo];
            let right = prefix[hi] - prefix[s];
            let diff = (left - right).abs();
            if diff < best_diff {
                best_diff = diff;
                best = s;
            }
        }
        for (pos, code) in split_codes.iter_mut().enumerate().take(hi).skip(lo) {
            code.push(pos >= best);
        }
        stack.push((best, hi));
        stack.push((lo, best));
    }

    let mut by_len: Vec<BitCode> = split_codes;
    by_len.sort_by_key(BitCode::len);
    let mut out = vec![BitCode::default(); n];
    for (rank, code) in by_len.into_iter().enumerate() {
        out[ranked[rank]] = code;
    }
    out
}

impl Codebook {
    fn from_parts(codec: Codec, entries: impl IntoIterator<Item = (String, BitCode, f64)>) -> Self {
        let entries: Vec<_> = entries.into_iter().collect();
        let by_id = entries
            .iter()
            .enumerate()
            .map(|(i, (id, _, _))| (id.clone(), i))
            .collect();
        let by_code = entries
            .iter()
            .enumerate()
            .map(|(i, (_, c, _))| (c.clone(), i))
            .collect();
        let max_len = entries.iter().map(|(_, c, _)| c.len()).max().unwrap_or(0);
        Codebook {
            codec,
            entries,
            by_id,
            by_code,
            max_len,
        }
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(id, code)` pairs in flatten order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &BitCode)> {
        self.entries.iter().map(|(id, c, _)| (id.as_str(), c))
    }

    pub fn weight(&self, id: &str) -> Option<f64> {
        self.by_id.get(id).map(|&i| self.entries[i].2)
    }

    pub fn encode(&self, id: &str) -> Option<&BitCode> {
        self.by_id.get(id).map(|&i| &self.entries[i].1)
    }

    /// Read one code from the front of `bits`. Returns the concept id and the
    /// number of bits consumed.
    pub fn decode_prefix(&self, bits: &[bool]) -> Option<(&str, usize)> {
        let mut probe = BitCode::default();
        for &b in bits.iter().take(self.max_len) {
            probe.push(b);
            if let Some(&i) = self.by_code.get(&probe) {
                return Some((self.entries[i].0.as_str(), probe.len()));
            }
        }
        None
    }

    pub fn decode(&self, code: &BitCode) -> Option<&str> {
        self.by_code.get(code).map(|&i| self.entries[i].0.as_str())
    }

    pub fn to_document(&self, vocab: &Vocabulary) -> CodebookDocument {
        CodebookDocument {
            registry_id: vocab.registry_id(),
            name: vocab.name().to_owned(),
            version: vocab.version(),
            codec: self.codec,
            entries: self
                .entries
                .iter()
                .map(|(id, code, weight)| CodebookEntry {
                    id: id.clone(),
                    code: code.clone(),
                    weight: *weight,
                })
                .collect(),
        }
    }
}
