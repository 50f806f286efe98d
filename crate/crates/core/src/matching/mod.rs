//! Hierarchical preference matching.
//!
//! A request is matched against every rule whose target lies in the
//! request's *closure*: the purpose itself at depth 0, its transitive parents
//! at their shortest distance, and concepts reached through one registry
//! mapping out of the request's vocabulary (`Equivalent` at no cost,
//! `Broader` one level up, `Narrower` never). The rule with the smallest
//! depth wins; at equal depth `Prohibit` beats `Permit`.

pub mod corpus;
pub mod oracle;
mod prefilter;
mod store;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::ConsentRequest;
use crate::taxonomy::{ConceptKind, ConceptRef, Registry, Relation, Vocabulary};

pub use prefilter::{
    build_prefilter, prefilter_check, BloomFilter, PrefilterPair, PrefilterResult,
};
pub use store::{DecisionStore, StoreEntry};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("unknown concept `{id}` in vocabulary {vocab}")]
    UnknownConcept { vocab: u8, id: String },
    #[error("unknown vocabulary {0}")]
    UnknownVocabulary(u8),
    #[error("rule {index}: {message}")]
    InvalidRule { index: usize, message: String },
    #[error("false-positive rate must lie strictly between 0 and 1, got {0}")]
    InvalidRate(f64),
    #[error("invalid preference file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// `concept` and all its transitive parents with their shortest distance,
/// ordered by `(depth, id)`.
pub fn ancestors(vocab: &Vocabulary, concept: &str) -> Result<Vec<(String, usize)>, MatchError> {
    if !vocab.contains(concept) {
        return Err(MatchError::UnknownConcept {
            vocab: vocab.registry_id(),
            id: concept.to_owned(),
        });
    }
    let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    depth.insert(concept, 0);
    queue.push_back(concept);
    while let Some(id) = queue.pop_front() {
        let d = depth[id];
        for p in &vocab.get(id).expect("queued ids exist").parents {
            if !depth.contains_key(p.as_str()) {
                depth.insert(p, d + 1);
                queue.push_back(p);
            }
        }
    }
    let mut out: Vec<(String, usize)> = depth
        .into_iter()
        .map(|(id, d)| (id.to_owned(), d))
        .collect();
    out.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    // Prohibit sorts first: it wins ties.
    #[serde(alias = "Prohibit")]
    Prohibit,
    #[serde(alias = "Permit")]
    Permit,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal_basis: Option<String>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        self.data.is_none() && self.controller.is_none() && self.legal_basis.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRule {
    pub target: ConceptRef,
    pub effect: Effect,
    #[serde(default, skip_serializing_if = "Constraints::is_empty")]
    pub constraints: Constraints,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub created_at: u64,
}

impl PreferenceRule {
    pub fn new(target: ConceptRef, effect: Effect) -> Self {
        PreferenceRule {
            target,
            effect,
            constraints: Constraints::default(),
            created_at: 0,
        }
    }

    pub fn prohibit(vocab: u8, id: &str) -> Self {
        Self::new(ConceptRef::new(vocab, id), Effect::Prohibit)
    }

    pub fn permit(vocab: u8, id: &str) -> Self {
        Self::new(ConceptRef::new(vocab, id), Effect::Permit)
    }
}

/// The user's rules; a rule is identified by its index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceSet {
    #[serde(default)]
    pub rules: Vec<PreferenceRule>,
}

impl PreferenceSet {
    pub fn new(rules: Vec<PreferenceRule>) -> Self {
        PreferenceSet { rules }
    }

    pub fn from_json(text: &str) -> Result<Self, MatchError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MatchError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preferences serialize")
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Check every target resolves and every constraint names a concept of
    /// the right kind in the target's vocabulary.
    pub fn validate(&self, registry: &Registry) -> Result<(), MatchError> {
        for (index, rule) in self.rules.iter().enumerate() {
            let bad = |message: String| MatchError::InvalidRule { index, message };
            let vocab = registry.get(rule.target.vocab()).ok_or_else(|| {
                bad(format!(
                    "vocabulary {} is not registered",
                    rule.target.vocab()
                ))
            })?;
            if !vocab.contains(rule.target.id()) {
                return Err(bad(format!("target `{}` does not resolve", rule.target)));
            }
            let c = &rule.constraints;
            if let Some(d) = &c.data {
                match vocab.get(d) {
                    Some(n) if n.kind == ConceptKind::PersonalData => {}
                    Some(_) => {
                        return Err(bad(format!(
                            "data constraint `{d}` is not a personal data concept"
                        )))
                    }
                    None => return Err(bad(format!("data constraint `{d}` does not resolve"))),
                }
            }
            if let Some(n) = c.controller {
                if n > crate::policy::MAX_CONTROLLER {
                    return Err(bad(format!("controller number {n} exceeds 12 bits")));
                }
            }
            if let Some(lb) = &c.legal_basis {
                let ok = lb.eq_ignore_ascii_case("consent")
                    || vocab
                        .get(lb)
                        .is_some_and(|n| n.kind == ConceptKind::LegalBasis);
                if !ok {
                    return Err(bad(format!(
                        "legal basis constraint `{lb}` is not a legal basis concept"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Consent,
    Object,
    Withdraw,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub request_id: String,
    pub outcome: Outcome,
    /// Index of the winning rule in the preference set.
    pub matched_rule: Option<usize>,
    /// Depth of the winning target in the request closure.
    pub specificity: Option<usize>,
    /// Request purpose up to the winning target.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<ConceptRef>,
}

impl Decision {
    pub fn prompt(request_id: impl Into<String>) -> Self {
        Decision {
            request_id: request_id.into(),
            outcome: Outcome::Prompt,
            matched_rule: None,
            specificity: None,
            path: Vec::new(),
        }
    }
}

/// Depths of everything a concept subsumes under, with one predecessor per
/// node for path reconstruction.
#[derive(Debug, Clone)]
pub struct Closure {
    nodes: BTreeMap<ConceptRef, (usize, Option<ConceptRef>)>,
}

impl Closure {
    /// Closure of a registered concept.
    pub fn of_concept(registry: &Registry, start: &ConceptRef) -> Result<Self, MatchError> {
        let vocab = registry
            .get(start.vocab())
            .ok_or(MatchError::UnknownVocabulary(start.vocab()))?;
        if !vocab.contains(start.id()) {
            return Err(MatchError::UnknownConcept {
                vocab: start.vocab(),
                id: start.id().to_owned(),
            });
        }
        Ok(Self::search(registry, start.clone(), Vec::new()))
    }

    /// Closure of a request purpose. A custom purpose sits alone at depth 0
    /// and reaches the vocabulary only through its parent anchor.
    pub fn of_request(registry: &Registry, request: &ConsentRequest) -> Result<Self, MatchError> {
        let vocab = registry
            .get(request.vocab)
            .ok_or(MatchError::UnknownVocabulary(request.vocab))?;
        let start = ConceptRef::new(request.vocab, &request.purpose);
        if vocab.contains(&request.purpose) {
            return Ok(Self::search(registry, start, Vec::new()));
        }
        match &request.parent {
            Some(p) if vocab.contains(p) => Ok(Self::search(
                registry,
                start,
                vec![ConceptRef::new(request.vocab, p)],
            )),
            _ => Err(MatchError::UnknownConcept {
                vocab: request.vocab,
                id: request.purpose.clone(),
            }),
        }
    }

    fn search(registry: &Registry, start: ConceptRef, anchors: Vec<ConceptRef>) -> Self {
        let origin = start.vocab();
        let mut nodes: BTreeMap<ConceptRef, (usize, Option<ConceptRef>)> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        nodes.insert(start.clone(), (0, None));
        heap.push(Reverse((0usize, start)));
        while let Some(Reverse((d, node))) = heap.pop() {
            if nodes[&node].0 < d {
                continue;
            }
            let mut edges: Vec<(ConceptRef, usize)> = Vec::new();
            match registry.concept(&node) {
                Some(n) => {
                    edges.extend(
                        n.parents
                            .iter()
                            .map(|p| (ConceptRef::new(node.vocab(), p), 1)),
                    );
                    if node.vocab() == origin {
                        for (other, rel) in registry.related(&node) {
                            match rel {
                                Relation::Equivalent => edges.push((other, 0)),
                                Relation::Broader => edges.push((other, 1)),
                                Relation::Narrower => {}
                            }
                        }
                    }
                }
                None => edges.extend(anchors.iter().map(|a| (a.clone(), 1))),
            }
            for (next, cost) in edges {
                let nd = d + cost;
                let better = nodes.get(&next).is_none_or(|(old, _)| nd < *old);
                if better {
                    nodes.insert(next.clone(), (nd, Some(node.clone())));
                    heap.push(Reverse((nd, next)));
                }
            }
        }
        Closure { nodes }
    }

    pub fn depth(&self, c: &ConceptRef) -> Option<usize> {
        self.nodes.get(c).map(|(d, _)| *d)
    }

    pub fn contains(&self, c: &ConceptRef) -> bool {
        self.nodes.contains_key(c)
    }

    /// Nodes ordered by `(depth, concept)`.
    pub fn entries(&self) -> Vec<(&ConceptRef, usize)> {
        let mut v: Vec<_> = self.nodes.iter().map(|(c, (d, _))| (c, *d)).collect();
        v.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        v
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Start node to `c`, inclusive.
    pub fn path_to(&self, c: &ConceptRef) -> Vec<ConceptRef> {
        let mut path = Vec::new();
        let mut cur = Some(c.clone());
        while let Some(node) = cur {
            cur = self.nodes.get(&node).and_then(|(_, p)| p.clone());
            path.push(node);
        }
        path.reverse();
        path
    }
}

fn constraints_hold(
    c: &Constraints,
    target_vocab: u8,
    request: &ConsentRequest,
    registry: &Registry,
) -> bool {
    if let Some(n) = c.controller {
        if request.controller.number != n {
            return false;
        }
    }
    if let Some(d) = &c.data {
        let want = ConceptRef::new(target_vocab, d);
        let any = request.personal_data.iter().any(|pd| {
            Closure::of_concept(registry, &ConceptRef::new(request.vocab, pd))
                .is_ok_and(|cl| cl.contains(&want))
        });
        if !any {
            return false;
        }
    }
    if let Some(lb) = &c.legal_basis {
        let same = lb.eq_ignore_ascii_case(&request.legal_basis);
        let under = || {
            Closure::of_concept(
                registry,
                &ConceptRef::new(request.vocab, &request.legal_basis),
            )
            .is_ok_and(|cl| cl.contains(&ConceptRef::new(target_vocab, lb)))
        };
        if !same && !under() {
            return false;
        }
    }
    true
}

/// Decide one request from the preference rules.
pub fn match_request(
    request: &ConsentRequest,
    prefs: &PreferenceSet,
    registry: &Registry,
    store: &DecisionStore,
) -> Result<Decision, MatchError> {
    let closure = Closure::of_request(registry, request)?;
    let winner = prefs
        .rules
        .iter()
        .enumerate()
        .filter_map(|(i, r)| closure.depth(&r.target).map(|d| (d, r.effect, i)))
        .filter(|&(_, _, i)| {
            let r = &prefs.rules[i];
            constraints_hold(&r.constraints, r.target.vocab(), request, registry)
        })
        .min();
    let Some((depth, effect, index)) = winner else {
        return Ok(Decision::prompt(&request.id));
    };
    let outcome = match effect {
        Effect::Permit => Outcome::Consent,
        Effect::Prohibit if store.consent_in_force(&request.id) => Outcome::Withdraw,
        Effect::Prohibit => Outcome::Object,
    };
    Ok(Decision {
        request_id: request.id.clone(),
        outcome,
        matched_rule: Some(index),
        specificity: Some(depth),
        path: closure.path_to(&prefs.rules[index].target),
    })
}
