//! Dark-pattern lint catalog.
//!
//! | rule | severity | finds |
//! |------|----------|-------|
//! | L1 | Error | a preference control that starts selected |
//! | L2 | Error | no layer offering both accept-all and refuse-all |
//! | L3 | Error | refusing takes more activations than accepting |
//! | L4 | Warning | a recipient given only as a generic group without a count |
//! | L5 | Warning | a purpose with neither a vocabulary concept nor a parent anchor |
//! | L6 | Error | special category data without an explicit-consent flow |
//! | L7 | Error | no way to close the dialogue without deciding |

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ControlAction, DialogueSpec, NoticeField, Quality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LintRule {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
    L7,
}

impl fmt::Display for LintRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

const GENERIC_RECIPIENTS: &[&str] = &[
    "third parties",
    "third party",
    "partners",
    "ad partners",
    "advertising partners",
    "business partners",
    "vendors",
    "affiliates",
    "others",
    "service providers",
    "recipients",
    "companies",
];

fn generic(name: &str) -> bool {
    let lower = name.trim().to_ascii_lowercase();
    let stripped = ["our ", "selected ", "trusted ", "other "]
        .iter()
        .fold(lower.as_str(), |s, p| s.strip_prefix(p).unwrap_or(s));
    GENERIC_RECIPIENTS.contains(&stripped) && !name.chars().any(|c| c.is_ascii_digit())
}

fn control_path(layer: usize, id: &str) -> String {
    format!("layers[{layer}].controls[{id}]")
}

/// Minimum `MoreInfo` activations to reach each layer from the first.
fn layer_distances(spec: &DialogueSpec) -> Vec<Option<usize>> {
    let mut dist = vec![None; spec.layers.len()];
    if dist.is_empty() {
        return dist;
    }
    dist[0] = Some(0);
    let mut q = VecDeque::from([0usize]);
    while let Some(l) = q.pop_front() {
        let d = dist[l].expect("queued layers have a distance");
        for t in spec.layers[l]
            .controls
            .iter()
            .filter_map(|c| c.target_layer)
        {
            if t < dist.len() && dist[t].is_none() {
                dist[t] = Some(d + 1);
                q.push_back(t);
            }
        }
    }
    dist
}

/// Fewest activations to accept everything and to refuse everything.
pub(crate) fn activation_costs(spec: &DialogueSpec) -> (Option<usize>, Option<usize>) {
    let dist = layer_distances(spec);
    let reach = |l: usize| dist.get(l).copied().flatten();
    let preselected = spec
        .controls()
        .filter(|(_, c)| c.action == ControlAction::Toggle && c.preselected)
        .count();
    let confirm = spec
        .controls()
        .filter(|(_, c)| c.action == ControlAction::ConfirmExplicit)
        .filter_map(|(l, _)| reach(l))
        .min();
    let explicit = spec.quality == Quality::Explicit;
    let mut accept = None::<usize>;
    let mut refuse = None::<usize>;
    let better = |slot: &mut Option<usize>, v: usize| {
        if slot.is_none_or(|s| v < s) {
            *slot = Some(v);
        }
    };
    for (l, c) in spec.controls() {
        let Some(d) = reach(l) else { continue };
        match c.action {
            ControlAction::AcceptAll if !explicit => better(&mut accept, d + 1),
            ControlAction::AcceptAll => {
                if confirm.is_some() {
                    better(&mut accept, d + 2);
                }
            }
            ControlAction::RefuseAll => better(&mut refuse, d + 1),
            ControlAction::SaveSelections => better(&mut refuse, d + 1 + preselected),
            _ => {}
        }
    }
    (accept, refuse)
}

/// Run the catalog; findings come ordered by `(layer, rule)`.
pub fn lint(spec: &DialogueSpec) -> Vec<LintFinding> {
    let mut found: Vec<(usize, LintFinding)> = Vec::new();
    let mut push = |layer: usize, rule: LintRule, severity, location: String, message: String| {
        found.push((
            layer,
            LintFinding {
                rule,
                severity,
                location,
                message,
            },
        ))
    };

    // L1
    for (l, c) in spec.controls() {
        if c.action == ControlAction::Toggle && c.preselected {
            push(
                l,
                LintRule::L1,
                Severity::Error,
                control_path(l, &c.control_id),
                format!("preference control `{}` is preselected", c.control_id),
            );
        }
    }

    // L2
    let accept = spec
        .controls()
        .find(|(_, c)| c.action == ControlAction::AcceptAll);
    let refuse = spec
        .controls()
        .find(|(_, c)| c.action == ControlAction::RefuseAll);
    let together = spec.layers.iter().any(|l| {
        l.controls
            .iter()
            .any(|c| c.action == ControlAction::AcceptAll)
            && l.controls
                .iter()
                .any(|c| c.action == ControlAction::RefuseAll)
    });
    match (accept, refuse) {
        (_, None) => {
            let (layer, location) = accept.map_or((0, "dialogue".to_owned()), |(l, c)| {
                (l, control_path(l, &c.control_id))
            });
            push(
                layer,
                LintRule::L2,
                Severity::Error,
                location,
                "no refuse-all control".into(),
            );
        }
        (Some((al, _)), Some((rl, rc))) if !together => push(
            rl,
            LintRule::L2,
            Severity::Error,
            control_path(rl, &rc.control_id),
            format!("accept-all is on layer {al} but refuse-all only on layer {rl}"),
        ),
        _ => {}
    }

    // L3
    let (accept_cost, refuse_cost) = activation_costs(spec);
    let unfair = match (accept_cost, refuse_cost) {
        (Some(a), Some(r)) => r > a,
        (Some(_), None) => true,
        _ => false,
    };
    if unfair {
        push(
            0,
            LintRule::L3,
            Severity::Error,
            "dialogue".into(),
            format!(
                "refusing takes {} activations, accepting {}",
                refuse_cost.map_or("unbounded".to_owned(), |r| r.to_string()),
                accept_cost.expect("unfair implies an accept path")
            ),
        );
    }

    // L4
    for r in &spec.requests {
        let layer = spec
            .layers
            .iter()
            .find(|l| {
                l.notice_elements
                    .iter()
                    .any(|e| e.request_id == r.id && e.field == NoticeField::Recipients)
            })
            .map_or(0, |l| l.index);
        for (i, p) in r.recipients.iter().enumerate() {
            if generic(&p.name) {
                push(
                    layer,
                    LintRule::L4,
                    Severity::Warning,
                    format!("requests[{}].recipients[{i}]", r.id),
                    format!("recipient `{}` is a generic group without a count", p.name),
                );
            }
        }
    }

    // L5
    for l in &spec.layers {
        for e in &l.notice_elements {
            if e.field == NoticeField::Purpose && e.concept.is_none() && e.anchor.is_none() {
                push(
                    l.index,
                    LintRule::L5,
                    Severity::Warning,
                    format!("layers[{}].requests[{}].purpose", l.index, e.request_id),
                    format!(
                        "purpose `{}` has no vocabulary concept or parent anchor",
                        e.text
                    ),
                );
            }
        }
    }

    // L6
    let gated = spec.quality == Quality::Explicit
        && spec
            .controls()
            .any(|(_, c)| c.action == ControlAction::ConfirmExplicit);
    if !gated {
        for r in spec.requests.iter().filter(|r| r.special_category) {
            push(
                0,
                LintRule::L6,
                Severity::Error,
                format!("requests[{}]", r.id),
                format!(
                    "request `{}` covers special category data without explicit consent",
                    r.id
                ),
            );
        }
    }

    // L7
    if !spec
        .controls()
        .any(|(_, c)| c.action == ControlAction::Dismiss)
    {
        push(
            0,
            LintRule::L7,
            Severity::Error,
            "dialogue".into(),
            "no control closes the dialogue without a decision".into(),
        );
    }

    found.sort_by_key(|(layer, f)| (*layer, f.rule));
    found.into_iter().map(|(_, f)| f).collect()
}
