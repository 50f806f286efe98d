use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ControlAction, DialogueError, DialogueSpec, Quality};
use crate::signal::DecisionSignal;

/// Result of replaying a user's clicks on a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanDecision {
    pub signal: DecisionSignal,
    /// The control that ended the dialogue, if any did.
    pub terminal: Option<String>,
    /// An accept was attempted on an explicit dialogue before confirmation.
    pub explicit_gate_unmet: bool,
}

/// Replay `activations` (control ids, in click order). The first terminal
/// control decides; later activations are ignored.
pub fn apply_human_decision(
    spec: &DialogueSpec,
    activations: &[String],
) -> Result<HumanDecision, DialogueError> {
    for id in activations {
        if spec.control(id).is_none() {
            return Err(DialogueError::UnknownControl(id.clone()));
        }
    }
    let explicit = spec.quality == Quality::Explicit;
    let mut toggles: BTreeMap<&str, bool> = spec
        .controls()
        .filter(|(_, c)| c.action == ControlAction::Toggle)
        .flat_map(|(_, c)| {
            c.bound_requests
                .iter()
                .map(move |r| (r.as_str(), c.preselected))
        })
        .collect();
    let mut confirmed = false;
    let mut gate_unmet = false;
    let mut out = DecisionSignal::default();

    for id in activations {
        let c = spec.control(id).expect("checked above");
        match c.action {
            ControlAction::MoreInfo => {}
            ControlAction::Toggle => {
                for r in &c.bound_requests {
                    let on = toggles.entry(r).or_insert(false);
                    *on = !*on;
                }
            }
            ControlAction::ConfirmExplicit => confirmed = true,
            ControlAction::AcceptAll => {
                if explicit && !confirmed {
                    gate_unmet = true;
                    continue;
                }
                out.consent = c.bound_requests.clone();
                return Ok(done(out, id, gate_unmet));
            }
            ControlAction::RefuseAll => {
                out.object = c.bound_requests.clone();
                return Ok(done(out, id, gate_unmet));
            }
            ControlAction::SaveSelections => {
                let (on, off): (Vec<String>, Vec<String>) = c
                    .bound_requests
                    .iter()
                    .cloned()
                    .partition(|r| toggles.get(r.as_str()).copied().unwrap_or(false));
                if explicit && !confirmed && !on.is_empty() {
                    gate_unmet = true;
                    continue;
                }
                out.consent = on;
                out.object = off;
                return Ok(done(out, id, gate_unmet));
            }
            ControlAction::Dismiss => return Ok(done(out, id, gate_unmet)),
        }
    }
    Ok(HumanDecision {
        signal: out,
        terminal: None,
        explicit_gate_unmet: gate_unmet,
    })
}

fn done(signal: DecisionSignal, id: &str, gate_unmet: bool) -> HumanDecision {
    HumanDecision {
        signal,
        terminal: Some(id.to_owned()),
        explicit_gate_unmet: gate_unmet,
    }
}
