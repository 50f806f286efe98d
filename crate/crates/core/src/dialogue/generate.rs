use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::style::sanitize_style;
use super::{
    dialogue_id, Control, ControlAction, DialogueError, DialogueSpec, Layer, NoticeElement,
    NoticeField, Quality, SourceMode,
};
use crate::signal::ConsentRequest;
use crate::taxonomy::{ConceptRef, Registry};

pub const NONE_DECLARED: &str = "none declared";

/// Presentation choices the user makes, not the controller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSettings {
    #[serde(default)]
    pub flatten_layers: bool,
}

fn label(registry: &Registry, vocab: u8, id: &str) -> String {
    registry
        .get(vocab)
        .and_then(|v| v.get(id))
        .map(|c| c.label.clone())
        .unwrap_or_else(|| id.to_owned())
}

fn registered(registry: &Registry, vocab: u8, id: &str) -> Option<ConceptRef> {
    registry
        .get(vocab)
        .filter(|v| v.contains(id))
        .map(|_| ConceptRef::new(vocab, id))
}

fn purpose_element(r: &ConsentRequest, registry: &Registry, text: String) -> NoticeElement {
    NoticeElement {
        request_id: r.id.clone(),
        field: NoticeField::Purpose,
        text,
        concept: registered(registry, r.vocab, &r.purpose),
        anchor: r.parent.as_ref().map(|p| ConceptRef::new(r.vocab, p)),
    }
}

/// All seven fields of one request; one element per value.
fn request_elements(r: &ConsentRequest, registry: &Registry) -> Vec<NoticeElement> {
    let mut out = vec![purpose_element(
        r,
        registry,
        label(registry, r.vocab, &r.purpose),
    )];
    let element = |field, text: String, concept| NoticeElement {
        request_id: r.id.clone(),
        field,
        text,
        concept,
        anchor: None,
    };
    let concepts = |field, ids: &[String], out: &mut Vec<NoticeElement>| {
        if ids.is_empty() {
            out.push(element(field, NONE_DECLARED.to_owned(), None));
        }
        for id in ids {
            out.push(element(
                field,
                label(registry, r.vocab, id),
                registered(registry, r.vocab, id),
            ));
        }
    };
    concepts(NoticeField::Processing, &r.processing, &mut out);
    concepts(NoticeField::PersonalData, &r.personal_data, &mut out);
    out.push(element(
        NoticeField::Controller,
        format!("{} (#{})", r.controller.name, r.controller.number),
        None,
    ));
    if r.recipients.is_empty() {
        out.push(element(
            NoticeField::Recipients,
            NONE_DECLARED.to_owned(),
            None,
        ));
    }
    for p in &r.recipients {
        out.push(element(
            NoticeField::Recipients,
            format!("{} (#{})", p.name, p.number),
            None,
        ));
    }
    concepts(
        NoticeField::LegalBasis,
        std::slice::from_ref(&r.legal_basis),
        &mut out,
    );
    concepts(NoticeField::Measures, &r.measures, &mut out);
    out
}

fn quality_for(requests: &[ConsentRequest]) -> Quality {
    if requests.iter().any(|r| r.special_category) {
        Quality::Explicit
    } else {
        Quality::Regular
    }
}

fn toggle(r: &ConsentRequest, registry: Option<&Registry>) -> Control {
    let text = registry.map_or_else(|| r.purpose.clone(), |reg| label(reg, r.vocab, &r.purpose));
    Control::new(
        format!("toggle-{}", r.id),
        ControlAction::Toggle,
        vec![r.id.clone()],
        text,
    )
}

/// The engine's decision set, in display order.
fn decision_controls(requests: &[ConsentRequest], quality: Quality) -> Vec<Control> {
    let ids: Vec<String> = requests.iter().map(|r| r.id.clone()).collect();
    let mut out = Vec::new();
    if quality == Quality::Explicit {
        out.push(Control::new(
            "confirm-explicit",
            ControlAction::ConfirmExplicit,
            ids.clone(),
            "I explicitly consent to the processing of special category data",
        ));
    }
    out.push(Control::new(
        "accept-all",
        ControlAction::AcceptAll,
        ids.clone(),
        "Accept all",
    ));
    out.push(Control::new(
        "refuse-all",
        ControlAction::RefuseAll,
        ids.clone(),
        "Refuse all",
    ));
    out.push(Control::new(
        "save-selections",
        ControlAction::SaveSelections,
        ids,
        "Save selections",
    ));
    out.push(Control::new(
        "dismiss",
        ControlAction::Dismiss,
        Vec::new(),
        "Close without deciding",
    ));
    out
}

const ENGINE_IDS: [&str; 5] = [
    "confirm-explicit",
    "accept-all",
    "refuse-all",
    "save-selections",
    "dismiss",
];

/// Single-layer dialogue from machine-readable requests.
pub fn generate_complete(
    requests: &[ConsentRequest],
    registry: &Registry,
) -> Result<DialogueSpec, DialogueError> {
    if requests.is_empty() {
        return Err(DialogueError::EmptyRequestSet);
    }
    let quality = quality_for(requests);
    let mut layer = Layer::new(0);
    for r in requests {
        layer.notice_elements.extend(request_elements(r, registry));
    }
    layer
        .controls
        .extend(requests.iter().map(|r| toggle(r, Some(registry))));
    layer.controls.extend(decision_controls(requests, quality));
    Ok(DialogueSpec {
        dialogue_id: dialogue_id(SourceMode::Complete, requests, ""),
        layers: vec![layer],
        quality,
        source_mode: SourceMode::Complete,
        style_overrides: BTreeMap::new(),
        requests: requests.to_vec(),
    })
}

/// Controller notice template.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDocument {
    pub layers: Vec<TemplateLayer>,
    #[serde(default)]
    pub style: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateLayer {
    #[serde(default)]
    pub elements: Vec<TemplateElement>,
    #[serde(default)]
    pub controls: Vec<TemplateControl>,
    #[serde(default)]
    pub decision_marker: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateElement {
    pub request: String,
    pub field: NoticeField,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<ConceptRef>,
}

/// Only layer and preference controls; decision controls are the engine's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateControl {
    pub id: String,
    pub action: ControlAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(default)]
    pub preselected: bool,
    #[serde(default)]
    pub label: String,
}

impl TemplateDocument {
    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        serde_json::from_str(text).map_err(|e| DialogueError::TemplateSchema(e.to_string()))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ':'))
}

pub fn generate_from_template(
    template: &TemplateDocument,
    requests: &[ConsentRequest],
    registry: &Registry,
    settings: &UserSettings,
) -> Result<DialogueSpec, DialogueError> {
    let schema = |m: String| DialogueError::TemplateSchema(m);
    if requests.is_empty() {
        return Err(DialogueError::EmptyRequestSet);
    }
    if template.layers.is_empty() {
        return Err(schema("template has no layers".into()));
    }
    let marked: Vec<usize> = (0..template.layers.len())
        .filter(|&i| template.layers[i].decision_marker)
        .collect();
    if marked.len() > 1 {
        return Err(schema(format!(
            "decision marker on {} layers",
            marked.len()
        )));
    }
    let decision_layer = marked.first().copied().unwrap_or(0);
    let by_id: BTreeMap<&str, &ConsentRequest> =
        requests.iter().map(|r| (r.id.as_str(), r)).collect();
    let known = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| DialogueError::UnknownRequestRef(id.to_owned()))
    };

    let mut reserved: BTreeSet<String> = ENGINE_IDS.iter().map(|s| s.to_string()).collect();
    reserved.extend(requests.iter().map(|r| format!("toggle-{}", r.id)));
    reserved.extend((0..template.layers.len()).map(|i| format!("more-info-{i}")));
    let mut seen = BTreeSet::new();
    let mut toggled = BTreeSet::new();

    let mut layers = Vec::with_capacity(template.layers.len());
    for (index, tl) in template.layers.iter().enumerate() {
        let mut layer = Layer::new(index);
        for e in &tl.elements {
            let r = known(&e.request)?;
            if e.text.trim().is_empty() {
                return Err(schema(format!(
                    "empty text for {} of `{}`",
                    e.field.as_str(),
                    e.request
                )));
            }
            if let Some(c) = &e.concept {
                if registry.concept(c).is_none() {
                    return Err(schema(format!("concept {c} does not resolve")));
                }
            }
            let mut el = if e.field == NoticeField::Purpose {
                purpose_element(r, registry, e.text.clone())
            } else {
                NoticeElement {
                    request_id: r.id.clone(),
                    field: e.field,
                    text: e.text.clone(),
                    concept: None,
                    anchor: None,
                }
            };
            if e.concept.is_some() {
                el.concept = e.concept.clone();
            }
            layer.notice_elements.push(el);
        }
        for c in &tl.controls {
            if !valid_id(&c.id) || reserved.contains(&c.id) || !seen.insert(c.id.clone()) {
                return Err(schema(format!(
                    "control id `{}` is invalid, reserved or repeated",
                    c.id
                )));
            }
            let control = match c.action {
                ControlAction::MoreInfo => {
                    let target = c
                        .target
                        .filter(|&t| t < template.layers.len() && t != index)
                        .ok_or_else(|| schema(format!("more-info control `{}` needs another layer as target", c.id)))?;
                    Control::more_info(&c.id, target, non_empty(&c.label, "More information"))
                }
                ControlAction::Toggle => {
                    let rid = c
                        .request
                        .as_deref()
                        .ok_or_else(|| schema(format!("toggle `{}` names no request", c.id)))?;
                    let r = known(rid)?;
                    if !toggled.insert(rid.to_owned()) {
                        return Err(schema(format!("second toggle for `{rid}`")));
                    }
                    // preselected is ignored on purpose
                    Control::new(&c.id, ControlAction::Toggle, vec![r.id.clone()], non_empty(&c.label, &r.purpose))
                }
                other => {
                    return Err(schema(format!(
                        "control `{}`: {other:?} is a decision control and is generated by the user agent",
                        c.id
                    )))
                }
            };
            layer.controls.push(control);
        }
        layers.push(layer);
    }

    // every layer must be reachable from the first
    let mut reachable = vec![false; layers.len()];
    reachable[0] = true;
    for i in 1..layers.len() {
        propagate(&layers, &mut reachable);
        if !reachable[i] {
            layers[i - 1].controls.push(Control::more_info(
                format!("more-info-{i}"),
                i,
                "More information",
            ));
            reachable[i] = true;
        }
    }

    let quality = quality_for(requests);
    let target = &mut layers[decision_layer].controls;
    target.extend(
        requests
            .iter()
            .filter(|r| !toggled.contains(&r.id))
            .map(|r| toggle(r, Some(registry))),
    );
    target.extend(decision_controls(requests, quality));

    let template_key = serde_json::to_string(template).unwrap_or_default();
    let spec = DialogueSpec {
        dialogue_id: dialogue_id(SourceMode::Template, requests, &template_key),
        layers,
        quality,
        source_mode: SourceMode::Template,
        style_overrides: sanitize_style(&template.style),
        requests: requests.to_vec(),
    };
    Ok(if settings.flatten_layers {
        flatten_layers(&spec)
    } else {
        spec
    })
}

fn propagate(layers: &[Layer], reachable: &mut [bool]) {
    let mut changed = true;
    while changed {
        changed = false;
        for l in layers {
            if !reachable[l.index] {
                continue;
            }
            for t in l.controls.iter().filter_map(|c| c.target_layer) {
                if !reachable[t] {
                    reachable[t] = true;
                    changed = true;
                }
            }
        }
    }
}

fn non_empty(text: &str, fallback: &str) -> String {
    if text.trim().is_empty() {
        fallback.to_owned()
    } else {
        text.to_owned()
    }
}

/// Everything on one screen; layer controls are dropped.
pub fn flatten_layers(spec: &DialogueSpec) -> DialogueSpec {
    let mut layer = Layer::new(0);
    for l in &spec.layers {
        layer
            .notice_elements
            .extend(l.notice_elements.iter().cloned());
        layer.controls.extend(
            l.controls
                .iter()
                .filter(|c| c.action != ControlAction::MoreInfo)
                .cloned(),
        );
        if layer.placeholder.is_none() {
            layer.placeholder.clone_from(&l.placeholder);
        }
    }
    DialogueSpec {
        layers: vec![layer],
        ..spec.clone()
    }
}

/// What a controller may pass when it keeps its own notice. Anything else,
/// in particular a `controls` list, is a schema error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoicesOnlyCall {
    pub notice_ref: String,
    /// Subset of the fetched requests; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_ids: Option<Vec<String>>,
}

impl ChoicesOnlyCall {
    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        serde_json::from_str(text).map_err(|e| DialogueError::TemplateSchema(e.to_string()))
    }

    pub fn select(
        &self,
        requests: &[ConsentRequest],
    ) -> Result<Vec<ConsentRequest>, DialogueError> {
        let Some(ids) = &self.request_ids else {
            return Ok(requests.to_vec());
        };
        ids.iter()
            .map(|id| {
                requests
                    .iter()
                    .find(|r| &r.id == id)
                    .cloned()
                    .ok_or_else(|| DialogueError::UnknownRequestRef(id.clone()))
            })
            .collect()
    }
}

/// Opaque controller notice plus user-agent generated choices.
pub fn generate_choices_only(
    notice_ref: &str,
    requests: &[ConsentRequest],
) -> Result<DialogueSpec, DialogueError> {
    if notice_ref.trim().is_empty() {
        return Err(DialogueError::MissingNoticeRef);
    }
    if requests.is_empty() {
        return Err(DialogueError::EmptyRequestSet);
    }
    let quality = quality_for(requests);
    let mut layer = Layer::new(0);
    layer.placeholder = Some(notice_ref.to_owned());
    layer
        .controls
        .extend(requests.iter().map(|r| toggle(r, None)));
    layer.controls.extend(decision_controls(requests, quality));
    Ok(DialogueSpec {
        dialogue_id: dialogue_id(SourceMode::ChoicesOnly, requests, notice_ref),
        layers: vec![layer],
        quality,
        source_mode: SourceMode::ChoicesOnly,
        style_overrides: BTreeMap::new(),
        requests: requests.to_vec(),
    })
}
