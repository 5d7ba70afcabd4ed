//! Plan-augmented dialogue contexts and gold target strings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{serialize_action, serialize_history, Dialogue, Turn};
use crate::kb::KnowledgeBase;
use crate::planner::{remaining_plan, ActionPlan, PlanMode, PlannerError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt configuration includes a plan but none was supplied")]
    MissingPlan,
    #[error("prompt configuration includes the flow but none was supplied")]
    MissingFlow,
    #[error("customer turns are never prediction targets")]
    CustomerTurn,
    #[error("invalid prompt configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

/// Which augmentations a context carries. Written as a letter string:
/// `L` legal flows, `F` flow name, `P` action plan, `S` slots in the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PromptConfig {
    pub include_legal_flows: bool,
    pub include_flow: bool,
    pub include_plan: bool,
    #[serde(default)]
    pub include_plan_slots: bool,
}

impl PromptConfig {
    pub const BASE: PromptConfig = PromptConfig {
        include_legal_flows: false,
        include_flow: false,
        include_plan: false,
        include_plan_slots: false,
    };

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.include_plan && !self.include_flow {
            return Err(PromptError::InvalidConfig("a plan must be preceded by its flow (P needs F)".into()));
        }
        if self.include_plan_slots && !self.include_plan {
            return Err(PromptError::InvalidConfig("slot plans need a plan (S needs P)".into()));
        }
        Ok(())
    }
}

impl FromStr for PromptConfig {
    type Err = PromptError;

    /// Accepts any combination of `L`, `F`, `P`, `S` in any case and order,
    /// optionally separated by `+`. `base`, `none` and `-` mean no augmentation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = PromptConfig::BASE;
        if !matches!(s.trim().to_ascii_lowercase().as_str(), "" | "base" | "none" | "-") {
            for c in s.trim().chars().filter(|c| *c != '+') {
                let flag = match c.to_ascii_uppercase() {
                    'L' => &mut cfg.include_legal_flows,
                    'F' => &mut cfg.include_flow,
                    'P' => &mut cfg.include_plan,
                    'S' => &mut cfg.include_plan_slots,
                    _ => return Err(PromptError::InvalidConfig(format!("unknown flag `{c}` in `{s}`"))),
                };
                *flag = true;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for PromptConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flags = [
            (self.include_legal_flows, 'L'),
            (self.include_flow, 'F'),
            (self.include_plan, 'P'),
            (self.include_plan_slots, 'S'),
        ];
        let letters: String = flags.iter().filter(|(on, _)| *on).map(|(_, c)| *c).collect();
        if letters.is_empty() {
            f.write_str("base")
        } else {
            f.write_str(&letters)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedContext {
    pub text: String,
    pub turn_index: usize,
    pub config: PromptConfig,
}

/// Context for predicting turn `upto` of `d`: the legal flow list first,
/// then the serialized history, then the flow name and the plan.
pub fn build_context<S: AsRef<str>>(
    d: &Dialogue,
    upto: usize,
    cfg: &PromptConfig,
    legal_flows: &[S],
    flow: Option<&str>,
    plan: Option<&ActionPlan>,
) -> Result<AugmentedContext, PromptError> {
    cfg.validate()?;
    let mut parts: Vec<String> = Vec::with_capacity(4);
    if cfg.include_legal_flows {
        let list: Vec<&str> = legal_flows.iter().map(AsRef::as_ref).collect();
        parts.push(format!("legal_flows: {};", list.join(", ")));
    }
    let history = serialize_history(d, upto);
    if !history.is_empty() {
        parts.push(history);
    }
    if cfg.include_flow {
        let flow = flow.filter(|f| !f.is_empty()).ok_or(PromptError::MissingFlow)?;
        parts.push(format!("flow: {flow};"));
    }
    if cfg.include_plan {
        let plan = plan.ok_or(PromptError::MissingPlan)?;
        parts.push(format!("action_plan: {plan};"));
    }
    Ok(AugmentedContext { text: parts.join(" "), turn_index: upto, config: *cfg })
}

/// Teacher-forced context for turn `upto`: the plan, when requested, is the
/// remaining plan of the gold flow given the gold actions before `upto`.
pub fn gold_context<S: AsRef<str>>(
    kb: &KnowledgeBase,
    d: &Dialogue,
    upto: usize,
    cfg: &PromptConfig,
    legal_flows: &[S],
    mode: PlanMode,
) -> Result<AugmentedContext, PromptError> {
    let plan = if cfg.include_plan {
        let executed = d.actions_before(upto);
        Some(remaining_plan(kb, &d.flow, &executed, mode, cfg.include_plan_slots)?)
    } else {
        None
    };
    build_context(d, upto, cfg, legal_flows, Some(&d.flow), plan.as_ref())
}

/// `flow: <flow>; agent: <utterance>` or `flow: <flow>; action: <name>: <values>`.
pub fn build_target(turn: &Turn, flow: &str) -> Result<String, PromptError> {
    match turn {
        Turn::Agent { text } => Ok(format!("flow: {flow}; agent: {text}")),
        Turn::Action(call) => Ok(format!("flow: {flow}; {}", serialize_action(call))),
        Turn::Customer { .. } => Err(PromptError::CustomerTurn),
    }
}
