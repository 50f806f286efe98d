//! Random dialogues for fuzzing the generator, the lint and the markup.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{
    generate_choices_only, generate_complete, generate_from_template, Control, ControlAction,
    DialogueSpec, Layer, LintRule, NoticeField, Quality, SourceMode, TemplateControl,
    TemplateDocument, TemplateElement, TemplateLayer, UserSettings,
};
use crate::signal::{ConsentRequest, Party};
use crate::taxonomy::{ConceptKind, Registry, Vocabulary};

const RECIPIENTS: &[&str] = &[
    "MailDispatch GmbH",
    "Analytics Co",
    "Ad partners (12)",
    "CloudHost AG",
    "Fulfilment Ltd",
];

/// 1..=`max` valid requests drawn from `vocab`. Some purposes are custom
/// refinements anchored to a registered parent.
pub fn random_requests(
    rng: &mut impl Rng,
    registry: &Registry,
    vocab: &Vocabulary,
    max: usize,
) -> Vec<ConsentRequest> {
    let purposes = vocab.flatten_kind(ConceptKind::Purpose);
    let data = vocab.flatten_kind(ConceptKind::PersonalData);
    let bases = vocab.flatten_kind(ConceptKind::LegalBasis);
    let processing = vocab.flatten_kind(ConceptKind::Processing);
    let n = rng.random_range(1..=max.max(1));
    (0..n)
        .map(|i| {
            let p = purposes.choose(rng).copied().unwrap_or("Purpose");
            let (purpose, parent) = if rng.random_bool(0.15) {
                (format!("Custom{i}"), Some(p.to_owned()))
            } else {
                (p.to_owned(), None)
            };
            let mut personal_data: Vec<String> = Vec::new();
            for _ in 0..rng.random_range(0..3) {
                if let Some(d) = data.choose(rng) {
                    if !personal_data.iter().any(|x| x == d) {
                        personal_data.push((*d).to_owned());
                    }
                }
            }
            let recipients = (0..rng.random_range(0..3))
                .map(|k| Party {
                    name: RECIPIENTS
                        .choose(rng)
                        .copied()
                        .unwrap_or("Recipient")
                        .to_owned(),
                    number: (i * 10 + k + 1) as u16,
                })
                .collect();
            let legal_basis = bases
                .iter()
                .copied()
                .filter(|b| b.contains("Consent"))
                .collect::<Vec<_>>()
                .choose(rng)
                .copied()
                .unwrap_or("Consent")
                .to_owned();
            let mut r = ConsentRequest {
                id: format!("q{i}"),
                purpose,
                parent,
                vocab: vocab.registry_id(),
                personal_data,
                processing: processing
                    .choose(rng)
                    .map(|p| vec![(*p).to_owned()])
                    .unwrap_or_default(),
                controller: Party {
                    name: "Example Controller".into(),
                    number: rng.random_range(1..4000),
                },
                recipients,
                legal_basis,
                measures: Vec::new(),
                special_category: false,
            };
            r.validate(registry).expect("generated requests are valid");
            r
        })
        .collect()
}

/// Template with 1..=3 layers that mentions every request once per field it
/// draws, sometimes with its own toggles.
pub fn random_template(rng: &mut impl Rng, requests: &[ConsentRequest]) -> TemplateDocument {
    let layers = rng.random_range(1..=3usize);
    let marker = rng.random_range(0..layers);
    let mut doc = TemplateDocument {
        layers: (0..layers)
            .map(|l| TemplateLayer {
                decision_marker: l == marker,
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    };
    for r in requests {
        for field in NoticeField::ALL {
            if field == NoticeField::Purpose || rng.random_bool(0.5) {
                let l = rng.random_range(0..layers);
                doc.layers[l].elements.push(TemplateElement {
                    request: r.id.clone(),
                    field,
                    text: format!("{} of {}", field.as_str(), r.purpose),
                    concept: None,
                });
            }
        }
        if rng.random_bool(0.3) {
            let l = rng.random_range(0..layers);
            doc.layers[l].controls.push(TemplateControl {
                id: format!("tpl-toggle-{}", r.id),
                action: ControlAction::Toggle,
                request: Some(r.id.clone()),
                target: None,
                preselected: false,
                label: format!("Allow {}", r.purpose),
            });
        }
    }
    if rng.random_bool(0.3) {
        doc.style.insert("color".into(), "#202020".into());
    }
    doc
}

/// Spec from one of the three generation modes.
pub fn generate_mode(
    rng: &mut impl Rng,
    mode: SourceMode,
    requests: &[ConsentRequest],
    registry: &Registry,
) -> DialogueSpec {
    match mode {
        SourceMode::Complete => generate_complete(requests, registry),
        SourceMode::Template => generate_from_template(
            &random_template(rng, requests),
            requests,
            registry,
            &UserSettings {
                flatten_layers: rng.random_bool(0.2),
            },
        ),
        SourceMode::ChoicesOnly => generate_choices_only("controller-notice", requests),
    }
    .expect("generated inputs are valid")
}

/// A dark pattern planted in an otherwise clean spec, named by the rule
/// that must catch it.
pub fn plant(spec: &mut DialogueSpec, registry: &Registry, rule: LintRule) {
    let decision = spec.decision_layer().unwrap_or(0);
    match rule {
        LintRule::L1 => {
            let existing = spec
                .layers
                .iter_mut()
                .flat_map(|l| l.controls.iter_mut())
                .find(|c| c.action == ControlAction::Toggle);
            match existing {
                Some(c) => c.preselected = true,
                None => {
                    let rid = spec.requests[0].id.clone();
                    spec.layers[decision].controls.insert(
                        0,
                        Control {
                            preselected: true,
                            ..Control::new(
                                format!("planted-toggle-{rid}"),
                                ControlAction::Toggle,
                                vec![rid],
                                "Allow",
                            )
                        },
                    );
                }
            }
        }
        LintRule::L2 => {
            for l in &mut spec.layers {
                l.controls.retain(|c| c.action != ControlAction::RefuseAll);
            }
        }
        LintRule::L3 => {
            // refuse-all ends up two layers deeper than accept-all
            let mut refuse = None;
            for l in &mut spec.layers {
                if let Some(i) = l
                    .controls
                    .iter()
                    .position(|c| c.action == ControlAction::RefuseAll)
                {
                    refuse = Some(l.controls.remove(i));
                }
                l.controls
                    .retain(|c| c.action != ControlAction::SaveSelections);
            }
            let first = spec.layers.len();
            let mut middle = Layer::new(first);
            middle.controls.push(Control::more_info(
                format!("planted-more-{}", first + 1),
                first + 1,
                "Even more",
            ));
            let mut deepest = Layer::new(first + 1);
            deepest.controls.extend(refuse);
            spec.layers[decision].controls.push(Control::more_info(
                format!("planted-more-{first}"),
                first,
                "More options",
            ));
            spec.layers.push(middle);
            spec.layers.push(deepest);
        }
        LintRule::L4 => {
            let r = &mut spec.requests[0];
            r.recipients.push(Party {
                name: "Third parties".into(),
                number: 0,
            });
        }
        LintRule::L5 => {
            let rid = spec.requests[0].id.clone();
            let el = super::NoticeElement {
                request_id: rid,
                field: NoticeField::Purpose,
                text: "Improving things".into(),
                concept: None,
                anchor: None,
            };
            spec.layers[0].notice_elements.push(el);
        }
        LintRule::L6 => {
            let r = &mut spec.requests[0];
            let special = registry
                .get(r.vocab)
                .and_then(|v| v.concepts().iter().find(|c| c.special_category))
                .map(|c| c.id.clone());
            if let Some(d) = special {
                if !r.personal_data.contains(&d) {
                    r.personal_data.push(d);
                }
            }
            r.special_category = true;
            spec.quality = Quality::Regular;
            for l in &mut spec.layers {
                l.controls
                    .retain(|c| c.action != ControlAction::ConfirmExplicit);
            }
        }
        LintRule::L7 => {
            for l in &mut spec.layers {
                l.controls.retain(|c| c.action != ControlAction::Dismiss);
            }
        }
    }
}

pub const ALL_RULES: [LintRule; 7] = [
    LintRule::L1,
    LintRule::L2,
    LintRule::L3,
    LintRule::L4,
    LintRule::L5,
    LintRule::L6,
    LintRule::L7,
];

/// Generated spec with each rule planted with probability `dirty`.
pub fn random_spec(
    rng: &mut impl Rng,
    registry: &Registry,
    vocab: &Vocabulary,
    dirty: f64,
) -> DialogueSpec {
    let requests = random_requests(rng, registry, vocab, 5);
    let mode = *[
        SourceMode::Complete,
        SourceMode::Template,
        SourceMode::ChoicesOnly,
    ]
    .choose(rng)
    .expect("non-empty");
    let mut spec = generate_mode(rng, mode, &requests, registry);
    for rule in ALL_RULES {
        if rng.random_bool(dirty) {
            plant(&mut spec, registry, rule);
        }
    }
    spec
}
