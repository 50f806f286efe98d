//! Consent-request delivery and decision signalling over HTTP.
//!
//! Website → agent: every response carries
//! `Consent-Requests: <path>; v=<registry_id>` pointing at a JSON
//! [`RequestDocument`].
//!
//! Agent → website: decisions travel either as text,
//! `Consent-Decisions: consent="q1 q2", withdraw="q3", object="q4"`, or as a
//! binary word, `Consent-Decisions-Bin: <base64url>`, holding two bits per
//! request in document order (`00` none, `01` consent, `10` withdraw,
//! `11` object). Sessions are correlated by the opaque `Consent-Session`
//! header.

pub mod agent;
mod request;
pub mod website;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matching::MatchError;
use crate::policy::{decode_base64url, encode_base64url, CodecError, CompactWord};

pub(crate) use request::is_special;
pub use request::{ConsentRequest, Party, RequestDocument, RequestEntry};

pub const REQUESTS_HEADER: &str = "consent-requests";
pub const DECISIONS_HEADER: &str = "consent-decisions";
pub const DECISIONS_BIN_HEADER: &str = "consent-decisions-bin";
pub const SESSION_HEADER: &str = "consent-session";

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request `{request}`: invalid `{field}`: {message}")]
    Schema {
        request: String,
        field: &'static str,
        message: String,
    },
    #[error("malformed consent document: {0}")]
    Document(String),
    #[error("unknown vocabulary {0}")]
    UnknownVocabulary(u8),
    #[error("request `{0}` appears in more than one decision list")]
    Disjointness(String),
    #[error("decision for request `{0}` that was never received")]
    UnknownRequest(String),
    #[error("no pending dialogue `{0}`")]
    UnknownDialogue(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Dialogue(#[from] crate::dialogue::DialogueError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<reqwest::Error> for SignalError {
    fn from(e: reqwest::Error) -> Self {
        SignalError::Transport(e.to_string())
    }
}

/// Request ids the user (or the agent on their behalf) decided on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSignal {
    #[serde(default)]
    pub consent: Vec<String>,
    #[serde(default)]
    pub withdraw: Vec<String>,
    #[serde(default)]
    pub object: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "word_b64")]
    pub word: Option<CompactWord>,
}

mod word_b64 {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        w: &Option<CompactWord>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        match w {
            Some(w) => s.serialize_some(&encode_base64url(&w.to_bytes())),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> Result<Option<CompactWord>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| {
            decode_base64url(&t)
                .and_then(|b| CompactWord::from_bytes(&b))
                .map_err(serde::de::Error::custom)
        })
        .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalFormat {
    TextHeader,
    BinaryWord,
}

impl DecisionSignal {
    pub fn is_empty(&self) -> bool {
        self.consent.is_empty() && self.withdraw.is_empty() && self.object.is_empty()
    }

    pub fn check_disjoint(&self) -> Result<(), SignalError> {
        let mut seen = BTreeSet::new();
        for id in self
            .consent
            .iter()
            .chain(&self.withdraw)
            .chain(&self.object)
        {
            if !seen.insert(id) {
                return Err(SignalError::Disjointness(id.clone()));
            }
        }
        Ok(())
    }

    /// All ids, each list sorted, for set comparisons.
    pub fn normalized(&self) -> DecisionSignal {
        let sorted = |v: &Vec<String>| {
            let mut v = v.clone();
            v.sort();
            v
        };
        DecisionSignal {
            consent: sorted(&self.consent),
            withdraw: sorted(&self.withdraw),
            object: sorted(&self.object),
            word: None,
        }
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.consent
            .iter()
            .chain(&self.withdraw)
            .chain(&self.object)
            .map(String::as_str)
            .collect()
    }

    /// Digest over the sorted id lists, echoed in acknowledgments.
    pub fn digest(&self) -> String {
        let n = self.normalized();
        let mut h = Sha256::new();
        for (name, ids) in [
            ("consent", &n.consent),
            ("withdraw", &n.withdraw),
            ("object", &n.object),
        ] {
            h.update(name.as_bytes());
            h.update(b"=");
            h.update(ids.join(" ").as_bytes());
            h.update(b";");
        }
        hex::encode(h.finalize())
    }

    /// `Consent-Decisions` header value; empty sections are omitted.
    pub fn to_text_header(&self) -> Result<String, SignalError> {
        self.check_disjoint()?;
        let mut parts = Vec::new();
        for (name, ids) in [
            ("consent", &self.consent),
            ("withdraw", &self.withdraw),
            ("object", &self.object),
        ] {
            if ids.is_empty() {
                continue;
            }
            if let Some(bad) = ids.iter().find(|id| !is_token(id)) {
                return Err(SignalError::Header(format!(
                    "request id {bad:?} cannot travel in a header"
                )));
            }
            parts.push(format!("{name}=\"{}\"", ids.join(" ")));
        }
        Ok(parts.join(", "))
    }

    pub fn parse_text_header(value: &str) -> Result<Self, SignalError> {
        let mut out = DecisionSignal::default();
        let mut rest = value.trim();
        while !rest.is_empty() {
            let (name, after) = rest
                .split_once('=')
                .ok_or_else(|| SignalError::Header(format!("expected key=\"ids\" in {value:?}")))?;
            let after = after
                .trim_start()
                .strip_prefix('"')
                .ok_or_else(|| SignalError::Header("missing opening quote".into()))?;
            let (ids, tail) = after
                .split_once('"')
                .ok_or_else(|| SignalError::Header("missing closing quote".into()))?;
            let list = match name.trim() {
                "consent" => &mut out.consent,
                "withdraw" => &mut out.withdraw,
                "object" => &mut out.object,
                other => return Err(SignalError::Header(format!("unknown section `{other}`"))),
            };
            list.extend(ids.split_whitespace().map(str::to_owned));
            rest = tail.trim_start();
            if let Some(t) = rest.strip_prefix(',') {
                rest = t.trim_start();
            } else if !rest.is_empty() {
                return Err(SignalError::Header(format!("unexpected `{rest}`")));
            }
        }
        out.check_disjoint()?;
        Ok(out)
    }

    /// Binary word over the request ids of the document, in document order.
    pub fn to_word(&self, vocab: u8, request_ids: &[String]) -> Result<CompactWord, SignalError> {
        self.check_disjoint()?;
        if let Some(stray) = self
            .ids()
            .into_iter()
            .find(|id| !request_ids.iter().any(|r| r == id))
        {
            return Err(SignalError::UnknownRequest(stray.to_owned()));
        }
        let mut payload = Vec::with_capacity(request_ids.len() * 2);
        for id in request_ids {
            let code: [bool; 2] = if self.consent.contains(id) {
                [false, true]
            } else if self.withdraw.contains(id) {
                [true, false]
            } else if self.object.contains(id) {
                [true, true]
            } else {
                [false, false]
            };
            payload.extend_from_slice(&code);
        }
        Ok(CompactWord::new(vocab, payload))
    }

    pub fn from_word(word: &CompactWord, request_ids: &[String]) -> Result<Self, SignalError> {
        if word.payload.len() != request_ids.len() * 2 {
            return Err(SignalError::Header(format!(
                "decision word has {} bits for {} requests",
                word.payload.len(),
                request_ids.len()
            )));
        }
        let mut out = DecisionSignal::default();
        for (id, bits) in request_ids.iter().zip(word.payload.chunks(2)) {
            match (bits[0], bits[1]) {
                (false, false) => {}
                (false, true) => out.consent.push(id.clone()),
                (true, false) => out.withdraw.push(id.clone()),
                (true, true) => out.object.push(id.clone()),
            }
        }
        Ok(out)
    }

    pub fn to_binary_header(
        &self,
        vocab: u8,
        request_ids: &[String],
    ) -> Result<String, SignalError> {
        Ok(encode_base64url(
            &self.to_word(vocab, request_ids)?.to_bytes(),
        ))
    }

    pub fn parse_binary_header(value: &str, request_ids: &[String]) -> Result<Self, SignalError> {
        let word = CompactWord::from_bytes(&decode_base64url(value.trim())?)?;
        let mut s = Self::from_word(&word, request_ids)?;
        s.word = Some(word);
        Ok(s)
    }
}

fn is_token(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ':' | '/'))
}

/// Parse `Consent-Requests: /consent-requests.json; v=2`.
pub fn parse_requests_header(value: &str) -> Result<(String, u8), SignalError> {
    let mut parts = value.split(';').map(str::trim);
    let path = parts
        .next()
        .filter(|p| !p.is_empty())
        .ok_or_else(|| SignalError::Header("missing resource path".into()))?;
    let mut vocab = None;
    for p in parts {
        if let Some(v) = p.strip_prefix("v=") {
            vocab = Some(
                v.parse::<u8>()
                    .map_err(|_| SignalError::Header(format!("bad vocabulary id `{v}`")))?,
            );
        }
    }
    let vocab = vocab.ok_or_else(|| SignalError::Header("missing v= parameter".into()))?;
    Ok((path.to_owned(), vocab))
}

pub fn requests_header(path: &str, vocab: u8) -> String {
    format!("{path}; v={vocab}")
}

/// What the website sends back after logging a decision signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub session: String,
    pub received: DecisionSignal,
    pub digest: String,
}
