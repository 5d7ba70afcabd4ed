use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ground_problem_from, solve, GroundingInput, Plan, PlannerError};
use crate::kb::KnowledgeBase;

const DO_PREFIX: &str = "do action_";
const GET_PREFIX: &str = "get-slot slot_";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "name", rename_all = "lowercase")]
pub enum PlanEntry {
    Slot(String),
    Action(String),
}

impl PlanEntry {
    pub fn name(&self) -> &str {
        match self {
            PlanEntry::Slot(s) | PlanEntry::Action(s) => s,
        }
    }
}

/// A stripped plan as it appears in a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionPlan {
    pub entries: Vec<PlanEntry>,
}

impl ActionPlan {
    pub fn from_actions<S: Into<String>>(actions: impl IntoIterator<Item = S>) -> Self {
        Self { entries: actions.into_iter().map(|a| PlanEntry::Action(a.into())).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| match e {
            PlanEntry::Action(a) => Some(a.as_str()),
            PlanEntry::Slot(_) => None,
        })
    }

    /// Entry names in order, slots and actions alike.
    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(PlanEntry::name).collect()
    }
}

/// Comma separated entry names, e.g. `enter-details, make-password`.
impl fmt::Display for ActionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(e.name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanMode {
    #[default]
    Lookup,
    Replan,
}

pub fn strip_plan(plan: &Plan, include_slots: bool) -> ActionPlan {
    let entries = plan
        .steps
        .iter()
        .filter_map(|step| {
            if let Some(a) = step.strip_prefix(DO_PREFIX) {
                Some(PlanEntry::Action(a.to_string()))
            } else if include_slots {
                step.strip_prefix(GET_PREFIX).map(|s| PlanEntry::Slot(s.to_string()))
            } else {
                None
            }
        })
        .collect();
    ActionPlan { entries }
}

/// Actions of `flow` still to be executed after `executed`.
///
/// `Lookup` walks the flow's sequence, advancing whenever an executed action
/// matches the next expected one and skipping any that do not. `Replan`
/// grounds the flow with the executed actions marked done and solves again;
/// only `Replan` can interleave slot requests (`include_slots`).
pub fn remaining_plan<S: AsRef<str>>(
    kb: &KnowledgeBase,
    flow: &str,
    executed: &[S],
    mode: PlanMode,
    include_slots: bool,
) -> Result<ActionPlan, PlannerError> {
    let spec = kb.workflow(flow).ok_or_else(|| PlannerError::UnknownFlow(flow.to_string()))?;
    match mode {
        PlanMode::Lookup => {
            if include_slots {
                return Err(PlannerError::Malformed("slot plans require REPLAN mode".into()));
            }
            let seq = &spec.action_sequence;
            let mut pos = 0;
            for a in executed {
                if pos < seq.len() && seq[pos] == a.as_ref() {
                    pos += 1;
                }
            }
            Ok(ActionPlan::from_actions(seq[pos..].iter().cloned()))
        }
        PlanMode::Replan => {
            let input = GroundingInput {
                initial_slots: Vec::new(),
                executed: executed.iter().map(|a| a.as_ref().to_string()).collect(),
            };
            let problem = ground_problem_from(kb, flow, &input)?;
            Ok(strip_plan(&solve(&problem)?, include_slots))
        }
    }
}
