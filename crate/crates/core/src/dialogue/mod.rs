//! User-side consent dialogues.
//!
//! A [`DialogueSpec`] is generated in one of three modes: from complete
//! machine-readable requests, from a controller template, or around an
//! opaque controller notice where only the choices are generated. Whatever
//! the source, the decision controls are always the engine's own.

pub mod corpus;
mod decide;
mod generate;
mod lint;
mod style;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::signal::ConsentRequest;
use crate::taxonomy::ConceptRef;

pub use decide::{apply_human_decision, HumanDecision};
pub use generate::{
    flatten_layers, generate_choices_only, generate_complete, generate_from_template,
    ChoicesOnlyCall, TemplateControl, TemplateDocument, TemplateElement, TemplateLayer,
    UserSettings,
};
pub use lint::{lint, LintFinding, LintRule, Severity};
pub use style::{sanitize_style, ALLOWED_STYLE_PROPERTIES};

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("no consent requests to build a dialogue from")]
    EmptyRequestSet,
    #[error("template refers to undeclared request `{0}`")]
    UnknownRequestRef(String),
    #[error("invalid template: {0}")]
    TemplateSchema(String),
    #[error("choices-only dialogue needs a notice reference")]
    MissingNoticeRef,
    #[error("no control `{0}` in this dialogue")]
    UnknownControl(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Regular,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceMode {
    Complete,
    Template,
    ChoicesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoticeField {
    Purpose,
    Processing,
    PersonalData,
    Controller,
    Recipients,
    LegalBasis,
    Measures,
}

impl NoticeField {
    pub const ALL: [NoticeField; 7] = [
        NoticeField::Purpose,
        NoticeField::Processing,
        NoticeField::PersonalData,
        NoticeField::Controller,
        NoticeField::Recipients,
        NoticeField::LegalBasis,
        NoticeField::Measures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoticeField::Purpose => "purpose",
            NoticeField::Processing => "processing",
            NoticeField::PersonalData => "personal_data",
            NoticeField::Controller => "controller",
            NoticeField::Recipients => "recipients",
            NoticeField::LegalBasis => "legal_basis",
            NoticeField::Measures => "measures",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoticeElement {
    pub request_id: String,
    pub field: NoticeField,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<ConceptRef>,
    /// Declared parent of a custom purpose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<ConceptRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlKind {
    LayerControl,
    PreferenceControl,
    DecisionControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlAction {
    MoreInfo,
    Toggle,
    AcceptAll,
    RefuseAll,
    SaveSelections,
    ConfirmExplicit,
    Dismiss,
}

impl ControlAction {
    pub fn kind(self) -> ControlKind {
        match self {
            ControlAction::MoreInfo => ControlKind::LayerControl,
            ControlAction::Toggle => ControlKind::PreferenceControl,
            _ => ControlKind::DecisionControl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Control {
    pub control_id: String,
    pub kind: ControlKind,
    pub action: ControlAction,
    #[serde(default)]
    pub bound_requests: Vec<String>,
    #[serde(default)]
    pub preselected: bool,
    /// Layer a `MoreInfo` control opens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_layer: Option<usize>,
    #[serde(default)]
    pub label: String,
}

impl Control {
    pub fn new(
        id: impl Into<String>,
        action: ControlAction,
        bound: Vec<String>,
        label: impl Into<String>,
    ) -> Self {
        Control {
            control_id: id.into(),
            kind: action.kind(),
            action,
            bound_requests: bound,
            preselected: false,
            target_layer: None,
            label: label.into(),
        }
    }

    pub fn more_info(id: impl Into<String>, target: usize, label: impl Into<String>) -> Self {
        Control {
            target_layer: Some(target),
            ..Control::new(id, ControlAction::MoreInfo, Vec::new(), label)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub index: usize,
    #[serde(default)]
    pub notice_elements: Vec<NoticeElement>,
    #[serde(default)]
    pub controls: Vec<Control>,
    /// Opaque controller notice shown in place of generated elements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<String>,
}

impl Layer {
    pub fn new(index: usize) -> Self {
        Layer {
            index,
            notice_elements: Vec::new(),
            controls: Vec::new(),
            placeholder: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSpec {
    pub dialogue_id: String,
    pub layers: Vec<Layer>,
    pub quality: Quality,
    pub source_mode: SourceMode,
    #[serde(default)]
    pub style_overrides: std::collections::BTreeMap<String, String>,
    /// The requests this dialogue decides.
    #[serde(default)]
    pub requests: Vec<ConsentRequest>,
}

impl DialogueSpec {
    pub fn controls(&self) -> impl Iterator<Item = (usize, &Control)> {
        self.layers
            .iter()
            .flat_map(|l| l.controls.iter().map(move |c| (l.index, c)))
    }

    pub fn control(&self, id: &str) -> Option<&Control> {
        self.controls().map(|(_, c)| c).find(|c| c.control_id == id)
    }

    pub fn request_ids(&self) -> Vec<String> {
        self.requests.iter().map(|r| r.id.clone()).collect()
    }

    /// Layer holding the accept-all control, if any.
    pub fn decision_layer(&self) -> Option<usize> {
        self.controls()
            .find(|(_, c)| c.action == ControlAction::AcceptAll)
            .map(|(l, _)| l)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Stable id over the mode and the request ids.
pub(crate) fn dialogue_id(mode: SourceMode, requests: &[ConsentRequest], extra: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("{mode:?}").as_bytes());
    for r in requests {
        h.update(b"\0");
        h.update(r.id.as_bytes());
    }
    h.update(b"\0");
    h.update(extra.as_bytes());
    format!("dlg-{}", &hex::encode(h.finalize())[..16])
}
