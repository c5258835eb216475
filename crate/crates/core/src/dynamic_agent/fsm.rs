use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::outcome;
use crate::core_agent::{Pose, PAN_RANGE, TILT_RANGE, TORSO_RANGE};
use crate::messaging::{is_identifier, Tick};

/// Declarative task state machine.
///
/// `transitions` map an action outcome to the next state, or to one of the
/// machine's terminal outcomes. A state may run a nested machine instead of
/// an action; the nested machine's terminal outcome becomes the state's
/// outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmDefinition {
    pub initial: String,
    pub terminals: BTreeSet<String>,
    pub states: BTreeMap<String, State>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    #[serde(flatten)]
    pub step: Step,
    #[serde(default)]
    pub transitions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Action(Action),
    Machine(Box<FsmDefinition>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavTarget {
    Location(String),
    Pose(Pose),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Say { text: String },
    Ask { text: String, expected: Vec<String>, timeout: Tick },
    NavigateTo(NavTarget),
    SetBody { torso_height: f64, pan: f64, tilt: f64 },
    Wait { ticks: Tick },
}

impl Action {
    /// Every outcome the action can report.
    pub fn outcomes(&self) -> BTreeSet<String> {
        let names: Vec<&str> = match self {
            Action::Say { .. } | Action::Wait { .. } => vec![outcome::SUCCEEDED],
            Action::NavigateTo(_) | Action::SetBody { .. } => vec![outcome::SUCCEEDED, outcome::ABORTED],
            Action::Ask { expected, .. } => {
                let mut all: Vec<&str> = expected.iter().map(String::as_str).collect();
                all.extend([outcome::TIMEOUT, outcome::UNEXPECTED]);
                all
            }
        };
        names.into_iter().map(str::to_owned).collect()
    }

    fn check(&self) -> Result<(), String> {
        let in_range = |(lo, hi): (f64, f64), v: f64| v >= lo && v <= hi;
        match self {
            Action::Say { text } if text.trim().is_empty() => Err("say text is empty".into()),
            Action::Ask { text, .. } if text.trim().is_empty() => Err("ask text is empty".into()),
            Action::Ask { timeout: 0, .. } => Err("ask timeout must be at least one tick".into()),
            Action::Ask { expected, .. } => {
                if expected.is_empty() {
                    return Err("ask needs at least one expected intent".into());
                }
                match expected
                    .iter()
                    .find(|e| !is_identifier(e) || e.as_str() == outcome::TIMEOUT || e.as_str() == outcome::UNEXPECTED)
                {
                    Some(bad) => Err(format!("`{bad}` cannot be an expected intent")),
                    None => Ok(()),
                }
            }
            Action::NavigateTo(NavTarget::Pose(p)) if !p.is_finite() => Err("goal pose is not finite".into()),
            Action::NavigateTo(NavTarget::Location(name)) if name.is_empty() => Err("empty location name".into()),
            Action::SetBody { torso_height, pan, tilt } => {
                if in_range(TORSO_RANGE, *torso_height) && in_range(PAN_RANGE, *pan) && in_range(TILT_RANGE, *tilt) {
                    Ok(())
                } else {
                    Err("body command outside joint limits".into())
                }
            }
            Action::Wait { ticks: 0 } => Err("wait must last at least one tick".into()),
            _ => Ok(()),
        }
    }
}

impl Step {
    pub fn outcomes(&self) -> BTreeSet<String> {
        match self {
            Step::Action(a) => a.outcomes(),
            // preemption unwinds the whole stack; it is never a transition
            Step::Machine(m) => m.terminals.iter().filter(|t| *t != outcome::PREEMPTED).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    NoStates { machine: String },
    MissingInitial { machine: String, initial: String },
    MissingTerminal { machine: String, terminal: String },
    NameClash { machine: String, name: String },
    DanglingTarget { state: String, target: String },
    UncoveredOutcome { state: String, outcome: String },
    UnknownOutcome { state: String, outcome: String },
    InvalidAction { state: String, reason: String },
}

/// Checks every structural rule, recursing into nested machines. State paths
/// in violations are `/`-joined from the root machine.
pub fn validate(fsm: &FsmDefinition) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    validate_into(fsm, "", &mut out);
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn validate_into(fsm: &FsmDefinition, prefix: &str, out: &mut Vec<Violation>) {
    let machine = if prefix.is_empty() { "/".to_owned() } else { prefix.to_owned() };
    if fsm.states.is_empty() {
        out.push(Violation::NoStates { machine: machine.clone() });
    }
    if !fsm.states.contains_key(&fsm.initial) {
        out.push(Violation::MissingInitial { machine: machine.clone(), initial: fsm.initial.clone() });
    }
    for required in outcome::REQUIRED_TERMINALS {
        if !fsm.terminals.contains(required) {
            out.push(Violation::MissingTerminal { machine: machine.clone(), terminal: required.to_owned() });
        }
    }
    for name in fsm.terminals.iter().filter(|t| fsm.states.contains_key(*t)) {
        out.push(Violation::NameClash { machine: machine.clone(), name: name.clone() });
    }

    for (name, state) in &fsm.states {
        let path = if prefix.is_empty() { name.clone() } else { format!("{prefix}/{name}") };
        match &state.step {
            Step::Action(action) => {
                if let Err(reason) = action.check() {
                    out.push(Violation::InvalidAction { state: path.clone(), reason });
                }
            }
            Step::Machine(inner) => validate_into(inner, &path, out),
        }
        let outcomes = state.step.outcomes();
        for o in &outcomes {
            if !state.transitions.contains_key(o) {
                out.push(Violation::UncoveredOutcome { state: path.clone(), outcome: o.clone() });
            }
        }
        for (o, target) in &state.transitions {
            if !outcomes.contains(o) {
                out.push(Violation::UnknownOutcome { state: path.clone(), outcome: o.clone() });
            }
            if !fsm.states.contains_key(target) && !fsm.terminals.contains(target) {
                out.push(Violation::DanglingTarget { state: path.clone(), target: target.clone() });
            }
        }
    }
}
