//! Random matching corpora for oracle and prefilter checks.

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use super::{Constraints, Effect, PreferenceRule, PreferenceSet, StoreEntry};
use crate::matching::Outcome;
use crate::signal::{ConsentRequest, Party};
use crate::taxonomy::{
    Codec, ConceptEntry, ConceptKind, ConceptMapping, ConceptRef, Registry, Relation, Vocabulary,
    VocabularyDocument,
};

#[derive(Debug, Clone, Copy)]
pub struct CorpusParams {
    pub max_nodes: usize,
    pub max_rules: usize,
    pub max_requests: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            max_nodes: 200,
            max_rules: 50,
            max_requests: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub registry: Registry,
    pub prefs: PreferenceSet,
    pub requests: Vec<ConsentRequest>,
    pub store: Vec<StoreEntry>,
}

pub const PRIMARY_VOCAB: u8 = 1;
pub const SECONDARY_VOCAB: u8 = 2;

/// Random DAG entries: each node gets 0 (10%), 1 (70%) or 2 (20%) parents
/// drawn from the nodes before it.
pub fn random_dag(
    rng: &mut impl Rng,
    prefix: &str,
    n: usize,
    kind: ConceptKind,
) -> Vec<ConceptEntry> {
    let mut out: Vec<ConceptEntry> = Vec::with_capacity(n);
    for i in 0..n {
        let roll = rng.random_range(0..10);
        let wanted = match roll {
            0 => 0,
            1..=7 => 1,
            _ => 2,
        };
        let mut parents = Vec::new();
        if i > 0 {
            for _ in 0..wanted {
                let p = format!("{prefix}{}", rng.random_range(0..i));
                if !parents.contains(&p) {
                    parents.push(p);
                }
            }
        }
        out.push(ConceptEntry {
            id: format!("{prefix}{i}"),
            label: format!("{prefix} {i}"),
            kind,
            parents,
            special_category: Some(kind == ConceptKind::PersonalData && rng.random_bool(0.1)),
            weight: Some(f64::from(rng.random_range(1u32..=100))),
        });
    }
    out
}

fn legal_bases() -> Vec<ConceptEntry> {
    let lb = |id: &str, parents: &[&str]| ConceptEntry {
        id: id.to_owned(),
        label: id.to_owned(),
        kind: ConceptKind::LegalBasis,
        parents: parents.iter().map(|s| s.to_string()).collect(),
        special_category: None,
        weight: None,
    };
    vec![
        lb("Consent", &[]),
        lb("ExplicitConsent", &["Consent"]),
        lb("Contract", &[]),
    ]
}

pub fn random_vocabulary(
    rng: &mut impl Rng,
    registry_id: u8,
    purposes: usize,
    data: usize,
) -> Vocabulary {
    let mut concepts = random_dag(rng, "p", purposes, ConceptKind::Purpose);
    concepts.extend(random_dag(rng, "d", data, ConceptKind::PersonalData));
    concepts.extend(legal_bases());
    Vocabulary::from_document(VocabularyDocument {
        registry_id: i64::from(registry_id),
        name: format!("generated-{registry_id}"),
        version: 1,
        codec: if rng.random_bool(0.5) {
            Codec::ShannonFano
        } else {
            Codec::Enumeration
        },
        concepts,
    })
    .expect("generated vocabulary is valid")
}

pub fn generate_case(rng: &mut impl Rng, params: CorpusParams) -> Case {
    let budget = params.max_nodes.max(10) - 3;
    let second = rng.random_bool(0.5);
    let b_nodes = if second {
        rng.random_range(2..=budget / 4)
    } else {
        0
    };
    let a_total = rng.random_range(4..=budget - b_nodes);
    let a_data = (a_total / 5).max(1);
    let a_purposes = a_total - a_data;

    let mut registry = Registry::new();
    registry
        .insert(random_vocabulary(rng, PRIMARY_VOCAB, a_purposes, a_data))
        .expect("fresh registry");
    let (b_purposes, b_data) = (
        b_nodes.saturating_sub(b_nodes / 4).max(1),
        (b_nodes / 4).max(1),
    );
    if second {
        registry
            .insert(random_vocabulary(rng, SECONDARY_VOCAB, b_purposes, b_data))
            .expect("distinct id");
        for _ in 0..rng.random_range(0..=b_purposes.min(12)) {
            let relation = *[Relation::Equivalent, Relation::Broader, Relation::Narrower]
                .choose(rng)
                .unwrap();
            let (from, to) = (
                ConceptRef::new(
                    PRIMARY_VOCAB,
                    format!("p{}", rng.random_range(0..a_purposes)),
                ),
                ConceptRef::new(
                    SECONDARY_VOCAB,
                    format!("p{}", rng.random_range(0..b_purposes)),
                ),
            );
            let m = if rng.random_bool(0.5) {
                ConceptMapping { from, to, relation }
            } else {
                ConceptMapping {
                    from: to,
                    to: from,
                    relation,
                }
            };
            registry.add_mapping(m).expect("mapping ends exist");
        }
        if rng.random_bool(0.5) {
            registry
                .add_mapping(ConceptMapping {
                    from: ConceptRef::new(
                        PRIMARY_VOCAB,
                        format!("d{}", rng.random_range(0..a_data)),
                    ),
                    to: ConceptRef::new(
                        SECONDARY_VOCAB,
                        format!("d{}", rng.random_range(0..b_data)),
                    ),
                    relation: Relation::Equivalent,
                })
                .expect("mapping ends exist");
        }
    }

    let dims = |v: u8| {
        if v == PRIMARY_VOCAB {
            (a_purposes, a_data)
        } else {
            (b_purposes, b_data)
        }
    };
    let pick_vocab = |rng: &mut dyn rand::RngCore| {
        if second && rng.random_bool(0.25) {
            SECONDARY_VOCAB
        } else {
            PRIMARY_VOCAB
        }
    };

    let rules = (0..rng.random_range(0..=params.max_rules))
        .map(|_| {
            let v = pick_vocab(rng);
            let (np, nd) = dims(v);
            let mut constraints = Constraints::default();
            if rng.random_bool(0.15) {
                constraints.data = Some(format!("d{}", rng.random_range(0..nd)));
            }
            if rng.random_bool(0.15) {
                constraints.controller = Some(rng.random_range(1..=4));
            }
            if rng.random_bool(0.15) {
                constraints.legal_basis = Some(
                    ["Consent", "ExplicitConsent"]
                        .choose(rng)
                        .unwrap()
                        .to_string(),
                );
            }
            PreferenceRule {
                target: ConceptRef::new(v, format!("p{}", rng.random_range(0..np))),
                effect: if rng.random_bool(0.5) {
                    Effect::Permit
                } else {
                    Effect::Prohibit
                },
                constraints,
                created_at: 0,
            }
        })
        .collect();

    let requests: Vec<ConsentRequest> = (0..rng.random_range(0..=params.max_requests))
        .map(|i| {
            let v = pick_vocab(rng);
            let (np, nd) = dims(v);
            let (purpose, parent) = if rng.random_bool(0.15) {
                (
                    format!("custom{i}"),
                    Some(format!("p{}", rng.random_range(0..np))),
                )
            } else {
                (format!("p{}", rng.random_range(0..np)), None)
            };
            ConsentRequest {
                id: format!("r{i}"),
                purpose,
                parent,
                vocab: v,
                personal_data: (0..rng.random_range(0..=3))
                    .map(|_| format!("d{}", rng.random_range(0..nd)))
                    .collect(),
                processing: Vec::new(),
                controller: Party {
                    name: "Controller".into(),
                    number: rng.random_range(1..=4),
                },
                recipients: Vec::new(),
                legal_basis: ["Consent", "ExplicitConsent"]
                    .choose(rng)
                    .unwrap()
                    .to_string(),
                measures: Vec::new(),
                special_category: false,
            }
        })
        .collect();

    let mut store = Vec::new();
    for r in &requests {
        if rng.random_bool(0.3) {
            store.push(entry(&r.id, Outcome::Consent));
            if rng.random_bool(0.2) {
                store.push(entry(&r.id, Outcome::Object));
            }
        }
    }

    Case {
        registry,
        prefs: PreferenceSet::new(rules),
        requests,
        store,
    }
}

fn entry(id: &str, outcome: Outcome) -> StoreEntry {
    StoreEntry {
        request_id: id.to_owned(),
        outcome,
        rule_index: None,
        timestamp: 0,
    }
}

/// `count` cases from a fixed seed.
pub fn corpus(seed: u64, count: usize, params: CorpusParams) -> Vec<Case> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| generate_case(&mut rng, params))
        .collect()
}
