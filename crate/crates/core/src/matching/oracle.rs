//! Brute-force reference matcher.
//!
//! Enumerates every upward path out of the request purpose, scanning the
//! raw mapping table for translation hops, and compares every
//! `(rule, path)` pair. Exponential in the worst case; meant for checking
//! [`match_request`](super::match_request) on generated corpora.

use std::collections::BTreeMap;

use super::{Decision, Effect, Outcome, PreferenceSet, StoreEntry};
use crate::signal::ConsentRequest;
use crate::taxonomy::{ConceptRef, Registry, Relation};

/// Shortest path cost to every reachable node, found by full path
/// enumeration.
pub fn path_costs(
    registry: &Registry,
    start: &ConceptRef,
    anchor: Option<&ConceptRef>,
) -> BTreeMap<ConceptRef, usize> {
    let mut best = BTreeMap::new();
    walk(registry, start.vocab(), start, 0, anchor, &mut best);
    best
}

fn walk(
    registry: &Registry,
    origin: u8,
    node: &ConceptRef,
    cost: usize,
    anchor: Option<&ConceptRef>,
    best: &mut BTreeMap<ConceptRef, usize>,
) {
    let entry = best.entry(node.clone()).or_insert(cost);
    if cost < *entry {
        *entry = cost;
    }
    let Some(vocab) = registry.get(node.vocab()) else {
        return;
    };
    let Some(concept) = vocab.concepts().iter().find(|c| c.id == node.id()) else {
        if let Some(a) = anchor {
            walk(registry, origin, a, cost + 1, None, best);
        }
        return;
    };
    for p in &concept.parents {
        walk(
            registry,
            origin,
            &ConceptRef(node.vocab(), p.clone()),
            cost + 1,
            None,
            best,
        );
    }
    if node.vocab() != origin {
        return;
    }
    for m in registry.mappings() {
        let (other, rel) = if &m.from == node {
            (&m.to, m.relation)
        } else if &m.to == node {
            // reverse reading of a stored mapping
            let rel = match m.relation {
                Relation::Broader => Relation::Narrower,
                Relation::Narrower => Relation::Broader,
                Relation::Equivalent => Relation::Equivalent,
            };
            (&m.from, rel)
        } else {
            continue;
        };
        match rel {
            Relation::Equivalent => walk(registry, origin, other, cost, None, best),
            Relation::Broader => walk(registry, origin, other, cost + 1, None, best),
            Relation::Narrower => {}
        }
    }
}

fn reaches(registry: &Registry, from: &ConceptRef, target: &ConceptRef) -> bool {
    let known = registry
        .get(from.vocab())
        .is_some_and(|v| v.concepts().iter().any(|c| c.id == from.id()));
    known && path_costs(registry, from, None).contains_key(target)
}

/// Reference decision; `path` is left empty.
pub fn oracle_match(
    request: &ConsentRequest,
    prefs: &PreferenceSet,
    registry: &Registry,
    store: &[StoreEntry],
) -> Option<Decision> {
    let vocab = registry.get(request.vocab)?;
    let start = ConceptRef(request.vocab, request.purpose.clone());
    let registered = vocab.concepts().iter().any(|c| c.id == request.purpose);
    let anchor = request
        .parent
        .as_ref()
        .map(|p| ConceptRef(request.vocab, p.clone()));
    if !registered
        && !anchor
            .as_ref()
            .is_some_and(|a| vocab.concepts().iter().any(|c| c.id == a.id()))
    {
        return None;
    }
    let costs = path_costs(
        registry,
        &start,
        if registered { None } else { anchor.as_ref() },
    );

    let mut best: Option<(usize, bool, usize)> = None;
    for (index, rule) in prefs.rules.iter().enumerate() {
        let Some(&depth) = costs.get(&rule.target) else {
            continue;
        };
        let c = &rule.constraints;
        if c.controller.is_some_and(|n| n != request.controller.number) {
            continue;
        }
        if let Some(d) = &c.data {
            let want = ConceptRef(rule.target.vocab(), d.clone());
            let hit = request
                .personal_data
                .iter()
                .any(|pd| reaches(registry, &ConceptRef(request.vocab, pd.clone()), &want));
            if !hit {
                continue;
            }
        }
        if let Some(lb) = &c.legal_basis {
            let want = ConceptRef(rule.target.vocab(), lb.clone());
            let from = ConceptRef(request.vocab, request.legal_basis.clone());
            if !lb.eq_ignore_ascii_case(&request.legal_basis) && !reaches(registry, &from, &want) {
                continue;
            }
        }
        let candidate = (depth, rule.effect == Effect::Permit, index);
        if best.is_none_or(|b| candidate < b) {
            best = Some(candidate);
        }
    }

    let Some((depth, permit, index)) = best else {
        return Some(Decision::prompt(&request.id));
    };
    let prior_consent = store
        .iter()
        .rev()
        .find(|e| e.request_id == request.id && e.outcome != Outcome::Prompt)
        .is_some_and(|e| e.outcome == Outcome::Consent);
    let outcome = match (permit, prior_consent) {
        (true, _) => Outcome::Consent,
        (false, true) => Outcome::Withdraw,
        (false, false) => Outcome::Object,
    };
    Some(Decision {
        request_id: request.id.clone(),
        outcome,
        matched_rule: Some(index),
        specificity: Some(depth),
        path: Vec::new(),
    })
}
