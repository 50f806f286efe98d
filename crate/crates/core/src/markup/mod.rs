//! HTML fallback markup for consent dialogues.
//!
//! Each `<dialog>` element is one layer, in document order. Inside a dialog:
//!
//! * an element with `data-adpc-request-id` scopes one request; request
//!   fields are read from `data-purpose`, `data-parent`,
//!   `data-personal-data` (comma list), `data-controller` (`Name (number)`),
//!   `data-legal-basis` and repeatable `data-recipient` on it or its
//!   descendants. A descendant carrying one of these attributes and some text
//!   is a notice element.
//! * `<button data-decision="consent|refuse|save|dismiss|confirm-explicit">`
//!   are decision controls bound to every request on the page.
//! * `<input data-toggle-for="<request id>">` are preference toggles;
//!   `checked` marks them preselected.
//! * `<a href="#<dialog id>">` opens another layer.
//!
//! Control ids come from the element `id`. Anything unexpected is reported as
//! a warning, never an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use scraper::{ElementRef, Html, Selector};
use serde::Serialize;
use thiserror::Error;

use crate::dialogue::{
    sanitize_style, Control, ControlAction, DialogueSpec, Layer, NoticeElement, NoticeField,
    Quality, SourceMode,
};
use crate::signal::{is_special, ConsentRequest, Party};
use crate::taxonomy::{ConceptRef, Registry, UNREGISTERED};

pub const REQUEST_ATTR: &str = "data-adpc-request-id";

const KNOWN_ATTRS: &[&str] = &[
    REQUEST_ATTR,
    "data-purpose",
    "data-parent",
    "data-personal-data",
    "data-controller",
    "data-legal-basis",
    "data-recipient",
    "data-decision",
    "data-toggle-for",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkupError {
    #[error("document contains no dialog element")]
    NoDialog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkupControl {
    pub layer: usize,
    pub control: Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkupNotice {
    pub layer: usize,
    pub request_id: String,
    pub field: NoticeField,
    /// Attribute value the element carried.
    pub value: String,
    pub text: String,
}

/// What a page's markup says about its consent dialogue.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MarkupDialogue {
    pub origin: String,
    /// Vocabulary ids are unknown until [`MarkupDialogue::resolve`].
    pub requests: Vec<ConsentRequest>,
    pub controls: Vec<MarkupControl>,
    pub notices: Vec<MarkupNotice>,
    pub layer_count: usize,
    pub style: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn element_layer(el: &ElementRef<'_>, dialogs: &[ElementRef<'_>]) -> Option<usize> {
    el.ancestors()
        .filter_map(ElementRef::wrap)
        .chain(std::iter::once(*el))
        .filter(|a| a.value().name() == "dialog")
        .last()
        .and_then(|d| dialogs.iter().position(|x| x.id() == d.id()))
}

fn nearest_request<'a>(el: &ElementRef<'a>) -> Option<ElementRef<'a>> {
    std::iter::once(*el)
        .chain(el.ancestors().filter_map(ElementRef::wrap))
        .find(|a| a.value().attr(REQUEST_ATTR).is_some())
}

fn own_text(el: &ElementRef<'_>) -> String {
    el.text()
        .collect::<Vec<_>>()
        .join(" ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_party(value: &str) -> Option<Party> {
    let v = value.trim();
    let open = v.rfind('(')?;
    let number = v[open + 1..]
        .strip_suffix(')')?
        .trim()
        .trim_start_matches('#')
        .parse()
        .ok()?;
    let name = v[..open].trim();
    (!name.is_empty()).then(|| Party {
        name: name.to_owned(),
        number,
    })
}

fn parse_style(text: &str) -> BTreeMap<String, String> {
    text.split(';')
        .filter_map(|decl| decl.split_once(':'))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect()
}

#[derive(Default)]
struct RequestDraft {
    purpose: Option<String>,
    parent: Option<String>,
    personal_data: Vec<String>,
    controller: Option<Party>,
    legal_basis: Option<String>,
    recipients: Vec<Party>,
}

/// Parse every dialog in an HTML document. Never fails on malformed input
/// beyond reporting that no dialog exists.
pub fn parse_markup(html: &str) -> Result<MarkupDialogue, MarkupError> {
    let doc = Html::parse_document(html);
    let dialog_sel = Selector::parse("dialog").expect("static selector");
    let all_sel = Selector::parse("*").expect("static selector");
    let dialogs: Vec<ElementRef> = doc
        .select(&dialog_sel)
        // nested dialogs belong to their outermost dialog
        .filter(|d| {
            !d.ancestors()
                .filter_map(ElementRef::wrap)
                .any(|a| a.value().name() == "dialog")
        })
        .collect();
    if dialogs.is_empty() {
        return Err(MarkupError::NoDialog);
    }
    let layer_ids: BTreeMap<&str, usize> = dialogs
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.value().id().map(|id| (id, i)))
        .collect();

    let mut out = MarkupDialogue {
        layer_count: dialogs.len(),
        ..Default::default()
    };
    if let Some(style) = dialogs[0].value().attr("style") {
        out.style = sanitize_style(&parse_style(style));
    }
    let mut order: Vec<String> = Vec::new();
    let mut drafts: BTreeMap<String, RequestDraft> = BTreeMap::new();
    let mut pending_controls: Vec<(usize, ElementRef)> = Vec::new();
    let mut anonymous = 0usize;

    for el in doc.select(&all_sel) {
        let Some(layer) = element_layer(&el, &dialogs) else {
            continue;
        };
        let v = el.value();
        for (name, _) in v.attrs() {
            if name.starts_with("data-") && !KNOWN_ATTRS.contains(&name) {
                out.warnings
                    .push(format!("unknown attribute `{name}` on <{}>", v.name()));
            }
        }
        if v.attr("data-decision").is_some()
            || v.attr("data-toggle-for").is_some()
            || (v.name() == "a" && v.attr("href").is_some_and(|h| h.starts_with('#')))
        {
            pending_controls.push((layer, el));
        }
        let Some(scope) = nearest_request(&el) else {
            if KNOWN_ATTRS[1..7].iter().any(|a| v.attr(a).is_some()) {
                out.warnings.push(format!(
                    "request attribute on <{}> outside any request scope",
                    v.name()
                ));
            }
            continue;
        };
        let rid = scope
            .value()
            .attr(REQUEST_ATTR)
            .unwrap_or_default()
            .trim()
            .to_owned();
        if rid.is_empty() {
            out.warnings.push("empty request id".into());
            continue;
        }
        if !drafts.contains_key(&rid) {
            order.push(rid.clone());
        }
        let draft = drafts.entry(rid.clone()).or_default();
        let is_scope = scope.id() == el.id();
        let text = if is_scope {
            String::new()
        } else {
            own_text(&el)
        };
        let notice = |field, value: &str, out: &mut MarkupDialogue| {
            if !text.is_empty() {
                out.notices.push(MarkupNotice {
                    layer,
                    request_id: rid.clone(),
                    field,
                    value: value.to_owned(),
                    text: text.clone(),
                });
            }
        };
        if let Some(p) = v.attr("data-purpose") {
            let p = p.trim();
            if p.is_empty() {
                out.warnings
                    .push(format!("request `{rid}`: empty data-purpose"));
            } else if draft.purpose.is_none() {
                draft.purpose = Some(p.to_owned());
            } else if draft.purpose.as_deref() != Some(p) {
                out.warnings.push(format!(
                    "request `{rid}`: conflicting purpose `{p}` ignored"
                ));
            }
            if let Some(parent) = v
                .attr("data-parent")
                .map(str::trim)
                .filter(|s| !s.is_empty())
            {
                draft.parent.get_or_insert_with(|| parent.to_owned());
            }
            notice(NoticeField::Purpose, p, &mut out);
        } else if v.attr("data-parent").is_some() {
            out.warnings
                .push(format!("request `{rid}`: data-parent without data-purpose"));
        }
        if let Some(list) = v.attr("data-personal-data") {
            for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                if !draft.personal_data.iter().any(|d| d == item) {
                    draft.personal_data.push(item.to_owned());
                }
            }
            notice(NoticeField::PersonalData, list.trim(), &mut out);
        }
        if let Some(c) = v.attr("data-controller") {
            match parse_party(c) {
                Some(p) => {
                    draft.controller.get_or_insert(p);
                }
                None => out.warnings.push(format!(
                    "request `{rid}`: controller `{c}` is not `Name (number)`"
                )),
            }
            notice(NoticeField::Controller, c.trim(), &mut out);
        }
        if let Some(lb) = v.attr("data-legal-basis").map(str::trim) {
            if !lb.is_empty() {
                draft.legal_basis.get_or_insert_with(|| lb.to_owned());
            }
            notice(NoticeField::LegalBasis, lb, &mut out);
        }
        if let Some(r) = v.attr("data-recipient") {
            if !r.trim().is_empty() {
                match parse_party(r) {
                    Some(p) if !draft.recipients.contains(&p) => draft.recipients.push(p),
                    Some(_) => {}
                    None => out.warnings.push(format!(
                        "request `{rid}`: recipient `{r}` is not `Name (number)`"
                    )),
                }
            }
            notice(NoticeField::Recipients, r.trim(), &mut out);
        }
    }

    for rid in &order {
        let d = drafts.remove(rid).expect("ordered ids have drafts");
        let Some(purpose) = d.purpose else {
            out.warnings.push(format!(
                "request `{rid}` has no data-purpose and is skipped"
            ));
            continue;
        };
        out.requests.push(ConsentRequest {
            id: rid.clone(),
            purpose,
            parent: d.parent,
            vocab: UNREGISTERED,
            personal_data: d.personal_data,
            processing: Vec::new(),
            controller: d.controller.unwrap_or(Party {
                name: String::new(),
                number: 0,
            }),
            recipients: d.recipients,
            legal_basis: d.legal_basis.unwrap_or_else(|| "Consent".to_owned()),
            measures: Vec::new(),
            special_category: false,
        });
    }
    let all_ids: Vec<String> = out.requests.iter().map(|r| r.id.clone()).collect();

    for (layer, el) in pending_controls {
        let v = el.value();
        let id = match v.id() {
            Some(id) if !id.trim().is_empty() => id.to_owned(),
            _ => {
                anonymous += 1;
                out.warnings
                    .push(format!("<{}> control without an id", v.name()));
                format!("{}-{anonymous}", v.name())
            }
        };
        let label = own_text(&el);
        let control = if let Some(decision) = v.attr("data-decision") {
            let action = match decision.trim() {
                "consent" => ControlAction::AcceptAll,
                "refuse" => ControlAction::RefuseAll,
                "save" => ControlAction::SaveSelections,
                "dismiss" => ControlAction::Dismiss,
                "confirm-explicit" => ControlAction::ConfirmExplicit,
                other => {
                    out.warnings
                        .push(format!("control `{id}`: unknown decision `{other}`"));
                    continue;
                }
            };
            let bound = if action == ControlAction::Dismiss {
                Vec::new()
            } else {
                all_ids.clone()
            };
            Control::new(id, action, bound, label)
        } else if let Some(rid) = v.attr("data-toggle-for") {
            let rid = rid.trim();
            if !all_ids.iter().any(|r| r == rid) {
                out.warnings
                    .push(format!("toggle `{id}` is for unknown request `{rid}`"));
                continue;
            }
            let label = if label.is_empty() {
                el.parent()
                    .and_then(ElementRef::wrap)
                    .map(|p| own_text(&p))
                    .unwrap_or_default()
            } else {
                label
            };
            Control {
                preselected: v.attr("checked").is_some(),
                ..Control::new(id, ControlAction::Toggle, vec![rid.to_owned()], label)
            }
        } else {
            let href = v.attr("href").unwrap_or_default();
            match layer_ids.get(&href[1..]) {
                Some(&target) => Control::more_info(id, target, label),
                None => continue,
            }
        };
        out.controls.push(MarkupControl { layer, control });
    }
    Ok(out)
}

impl MarkupDialogue {
    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }

    /// Assign each request the lowest registered vocabulary containing its
    /// purpose (or, for a custom purpose, its parent) and derive
    /// `special_category`.
    pub fn resolve(&mut self, registry: &Registry) {
        for r in &mut self.requests {
            let key = if registry.vocabularies().any(|v| v.contains(&r.purpose)) {
                &r.purpose
            } else {
                match &r.parent {
                    Some(p) => p,
                    None => continue,
                }
            };
            let Some(v) = registry.vocabularies().find(|v| v.contains(key)) else {
                self.warnings.push(format!(
                    "request `{}`: no registered vocabulary defines `{key}`",
                    r.id
                ));
                continue;
            };
            r.vocab = v.registry_id();
            r.special_category = r.personal_data.iter().any(|d| is_special(v, d));
        }
    }

    /// Dialogue spec for linting; vocabulary-dependent fields are only
    /// filled when a registry is given.
    pub fn to_spec(&self, registry: Option<&Registry>) -> DialogueSpec {
        let mut resolved = self.clone();
        if let Some(reg) = registry {
            resolved.resolve(reg);
        }
        let requests = resolved.requests;
        let by_id: BTreeMap<&str, &ConsentRequest> =
            requests.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut layers: Vec<Layer> = (0..self.layer_count.max(1)).map(Layer::new).collect();
        for n in &self.notices {
            let r = by_id.get(n.request_id.as_str());
            let concept_of = |id: &str| {
                let r = r?;
                registry?.get(r.vocab).filter(|v| v.contains(id))?;
                Some(ConceptRef::new(r.vocab, id))
            };
            let (concept, anchor) = match n.field {
                NoticeField::Purpose if r.is_some_and(|r| r.purpose == n.value) => (
                    r.and_then(|r| concept_of(&r.purpose)),
                    r.and_then(|r| r.parent.as_ref().map(|p| ConceptRef::new(r.vocab, p))),
                ),
                NoticeField::Purpose => (concept_of(&n.value), None),
                NoticeField::PersonalData | NoticeField::LegalBasis => (concept_of(&n.value), None),
                _ => (None, None),
            };
            layers[n.layer].notice_elements.push(NoticeElement {
                request_id: n.request_id.clone(),
                field: n.field,
                text: n.text.clone(),
                concept,
                anchor,
            });
        }
        for c in &self.controls {
            layers[c.layer].controls.push(c.control.clone());
        }
        let quality = if self
            .controls
            .iter()
            .any(|c| c.control.action == ControlAction::ConfirmExplicit)
        {
            Quality::Explicit
        } else {
            Quality::Regular
        };
        DialogueSpec {
            dialogue_id: crate::dialogue::dialogue_id(
                SourceMode::Template,
                &requests,
                &self.origin,
            ),
            layers,
            quality,
            source_mode: SourceMode::Template,
            style_overrides: self.style.clone(),
            requests,
        }
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn party_attr(p: &Party) -> String {
    format!("{} ({})", p.name, p.number)
}

pub fn layer_element_id(spec: &DialogueSpec, layer: usize) -> String {
    format!("{}-layer-{layer}", spec.dialogue_id)
}

/// HTML fragment with one `<dialog>` per layer.
pub fn emit_markup(spec: &DialogueSpec) -> String {
    let mut html = String::new();
    // request data goes with its first notice element, or the decision layer
    let mut home: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &spec.layers {
        for e in &l.notice_elements {
            home.entry(e.request_id.as_str()).or_insert(l.index);
        }
    }
    let fallback = spec.decision_layer().unwrap_or(0);
    for l in &spec.layers {
        let style: String = spec
            .style_overrides
            .iter()
            .map(|(k, v)| format!("{k}: {v}; "))
            .collect();
        let _ = write!(
            html,
            "<dialog id=\"{}\"",
            escape(&layer_element_id(spec, l.index))
        );
        if l.index == 0 {
            html.push_str(" open");
            if !style.is_empty() {
                let _ = write!(html, " style=\"{}\"", escape(style.trim_end()));
            }
        }
        html.push_str(">\n");
        if let Some(p) = &l.placeholder {
            let _ = writeln!(html, "  <div id=\"{}\"></div>", escape(p));
        }
        let mut sections: Vec<&str> = Vec::new();
        for e in &l.notice_elements {
            if !sections.contains(&e.request_id.as_str()) {
                sections.push(&e.request_id);
            }
        }
        for r in &spec.requests {
            let here = home.get(r.id.as_str()).copied().unwrap_or(fallback) == l.index;
            if here && !sections.contains(&r.id.as_str()) {
                sections.push(&r.id);
            }
        }
        for rid in sections {
            let Some(r) = spec.requests.iter().find(|r| r.id == rid) else {
                continue;
            };
            let is_home = home.get(rid).copied().unwrap_or(fallback) == l.index;
            let _ = write!(html, "  <section {REQUEST_ATTR}=\"{}\"", escape(rid));
            if is_home {
                let _ = write!(html, " data-purpose=\"{}\"", escape(&r.purpose));
                if let Some(p) = &r.parent {
                    let _ = write!(html, " data-parent=\"{}\"", escape(p));
                }
                let _ = write!(
                    html,
                    " data-personal-data=\"{}\" data-controller=\"{}\" data-legal-basis=\"{}\"",
                    escape(&r.personal_data.join(",")),
                    escape(&party_attr(&r.controller)),
                    escape(&r.legal_basis)
                );
            }
            html.push_str(">\n");
            if is_home {
                for p in &r.recipients {
                    let _ = writeln!(
                        html,
                        "    <data data-recipient=\"{}\"></data>",
                        escape(&party_attr(p))
                    );
                }
            }
            for e in l.notice_elements.iter().filter(|e| e.request_id == rid) {
                let attr = match e.field {
                    NoticeField::Purpose if e.concept.is_none() && e.anchor.is_none() => {
                        "data-purpose=\"\"".to_owned()
                    }
                    NoticeField::Purpose => {
                        let mut a = format!("data-purpose=\"{}\"", escape(&r.purpose));
                        if let Some(p) = &r.parent {
                            let _ = write!(a, " data-parent=\"{}\"", escape(p));
                        }
                        a
                    }
                    NoticeField::PersonalData => format!(
                        "data-personal-data=\"{}\"",
                        escape(e.concept.as_ref().map_or("", |c| c.id()))
                    ),
                    NoticeField::Controller => {
                        format!("data-controller=\"{}\"", escape(&party_attr(&r.controller)))
                    }
                    NoticeField::Recipients => {
                        let value = r
                            .recipients
                            .iter()
                            .find(|p| e.text.starts_with(&p.name))
                            .map(party_attr)
                            .unwrap_or_default();
                        format!("data-recipient=\"{}\"", escape(&value))
                    }
                    NoticeField::LegalBasis => {
                        format!("data-legal-basis=\"{}\"", escape(&r.legal_basis))
                    }
                    NoticeField::Processing | NoticeField::Measures => String::new(),
                };
                if attr.is_empty() {
                    let _ = writeln!(html, "    <p>{}</p>", escape(&e.text));
                } else {
                    let _ = writeln!(html, "    <p {attr}>{}</p>", escape(&e.text));
                }
            }
            html.push_str("  </section>\n");
        }
        for c in &l.controls {
            let id = escape(&c.control_id);
            let label = escape(&c.label);
            match c.action {
                ControlAction::Toggle => {
                    let rid = c
                        .bound_requests
                        .first()
                        .map(String::as_str)
                        .unwrap_or_default();
                    let checked = if c.preselected { " checked" } else { "" };
                    let _ = writeln!(
                        html,
                        "  <label><input type=\"checkbox\" id=\"{id}\" data-toggle-for=\"{}\"{checked}> {label}</label>",
                        escape(rid)
                    );
                }
                ControlAction::MoreInfo => {
                    let target = layer_element_id(spec, c.target_layer.unwrap_or(0));
                    let _ = writeln!(
                        html,
                        "  <a id=\"{id}\" href=\"#{}\">{label}</a>",
                        escape(&target)
                    );
                }
                action => {
                    let value = match action {
                        ControlAction::AcceptAll => "consent",
                        ControlAction::RefuseAll => "refuse",
                        ControlAction::SaveSelections => "save",
                        ControlAction::ConfirmExplicit => "confirm-explicit",
                        _ => "dismiss",
                    };
                    let _ = writeln!(
                        html,
                        "  <button type=\"button\" id=\"{id}\" data-decision=\"{value}\">{label}</button>"
                    );
                }
            }
        }
        html.push_str("</dialog>\n");
    }
    html
}

#[cfg(test)]
mod tests;
