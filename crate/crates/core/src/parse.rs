//! Parsing of model outputs back into structured predictions.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::Turn;
use crate::prompt::PromptConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExpectedKind {
    Action,
    Utterance,
}

impl ExpectedKind {
    pub fn of(turn: &Turn) -> Option<Self> {
        match turn {
            Turn::Agent { .. } => Some(ExpectedKind::Utterance),
            Turn::Action(_) => Some(ExpectedKind::Action),
            Turn::Customer { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PredictionKind {
    Action,
    Utterance,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub flow: Option<String>,
    pub kind: PredictionKind,
    pub action_name: Option<String>,
    pub slot_values: Vec<String>,
    pub utterance: Option<String>,
}

impl ParsedPrediction {
    pub fn malformed() -> Self {
        Self { flow: None, kind: PredictionKind::Malformed, action_name: None, slot_values: Vec::new(), utterance: None }
    }

    pub fn is_malformed(&self) -> bool {
        self.kind == PredictionKind::Malformed
    }
}

static ACTION_WITH_FLOW: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)^\s*flow:(?P<flow>[^;]*);\s*action:(?P<action>[^:]*):(?P<slots>.*)$").unwrap()
});
static ACTION_OPTIONAL_FLOW: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)^\s*(?:flow:(?P<flow>[^;]*);)?\s*action:(?P<action>[^:]*):(?P<slots>.*)$").unwrap()
});
static UTTERANCE_WITH_FLOW: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)^\s*flow:(?P<flow>[^;]*);\s*agent:(?P<text>.*)$").unwrap());
static UTTERANCE_OPTIONAL_FLOW: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)^\s*(?:flow:(?P<flow>[^;]*);)?\s*agent:(?P<text>.*)$").unwrap());

/// Comma separated slot values, trimmed. Blank input gives no values.
pub fn split_slot_values(text: &str) -> Vec<String> {
    let text = text.trim();
    if text.is_empty() {
        return Vec::new();
    }
    text.split(',').map(|v| v.trim().to_string()).collect()
}

/// Matches `text` against the output pattern for `expected`. Anything that
/// does not match, including an output of the other kind, is `Malformed`.
/// The `flow:` prefix is mandatory only when `cfg` includes the flow.
pub fn parse_prediction(text: &str, expected: ExpectedKind, cfg: &PromptConfig) -> ParsedPrediction {
    let flow_of = |caps: &regex::Captures| caps.name("flow").map(|m| m.as_str().trim().to_string());
    match expected {
        ExpectedKind::Action => {
            let re = if cfg.include_flow { &ACTION_WITH_FLOW } else { &ACTION_OPTIONAL_FLOW };
            let Some(caps) = re.captures(text) else {
                return ParsedPrediction::malformed();
            };
            let name = caps["action"].trim();
            if name.is_empty() {
                return ParsedPrediction::malformed();
            }
            ParsedPrediction {
                flow: flow_of(&caps),
                kind: PredictionKind::Action,
                action_name: Some(name.to_string()),
                slot_values: split_slot_values(&caps["slots"]),
                utterance: None,
            }
        }
        ExpectedKind::Utterance => {
            let re = if cfg.include_flow { &UTTERANCE_WITH_FLOW } else { &UTTERANCE_OPTIONAL_FLOW };
            let Some(caps) = re.captures(text) else {
                return ParsedPrediction::malformed();
            };
            ParsedPrediction {
                flow: flow_of(&caps),
                kind: PredictionKind::Utterance,
                action_name: None,
                slot_values: Vec::new(),
                utterance: Some(caps["text"].trim().to_string()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp() -> PromptConfig {
        "FP".parse().unwrap()
    }

    #[test]
    fn password_recovery_action() {
        let p = parse_prediction("flow: recover_password; action: enter-details: cm374950", ExpectedKind::Action, &fp());
        assert_eq!(p.flow.as_deref(), Some("recover_password"));
        assert_eq!(p.kind, PredictionKind::Action);
        assert_eq!(p.action_name.as_deref(), Some("enter-details"));
        assert_eq!(p.slot_values, ["cm374950"]);
        assert_eq!(p.utterance, None);
    }

    #[test]
    fn reset_2fa_repeated_values() {
        let p = parse_prediction(
            "flow: reset_2fa; action: verify-identity: 69233, asanders1, asanders1",
            ExpectedKind::Action,
            &fp(),
        );
        assert_eq!(p.slot_values, ["69233", "asanders1", "asanders1"]);
    }

    #[test]
    fn zero_slot_action() {
        let p = parse_prediction("flow: recover_password; action: make-password: ", ExpectedKind::Action, &fp());
        assert_eq!(p.action_name.as_deref(), Some("make-password"));
        assert!(p.slot_values.is_empty());
    }

    #[test]
    fn wrong_kind_is_malformed() {
        let p = parse_prediction("flow: recover_password; agent: Have a great day", ExpectedKind::Action, &fp());
        assert_eq!(p, ParsedPrediction::malformed());
        let p = parse_prediction("flow: x; action: a: b", ExpectedKind::Utterance, &fp());
        assert!(p.is_malformed());
        assert!(parse_prediction("", ExpectedKind::Utterance, &fp()).is_malformed());
        assert!(parse_prediction("flow: x; action: : v", ExpectedKind::Action, &fp()).is_malformed());
    }

    #[test]
    fn flow_is_optional_only_without_f() {
        let base = PromptConfig::BASE;
        let p = parse_prediction("agent: hello", ExpectedKind::Utterance, &base);
        assert_eq!((p.flow, p.utterance.as_deref()), (None, Some("hello")));
        assert!(parse_prediction("agent: hello", ExpectedKind::Utterance, &fp()).is_malformed());
        let p = parse_prediction("flow: boots; action: search-boots: ", ExpectedKind::Action, &base);
        assert_eq!(p.flow.as_deref(), Some("boots"));
    }

    #[test]
    fn utterance_spanning_lines_and_colons() {
        let p = parse_prediction("flow: f; agent: Note: line one\nline two  ", ExpectedKind::Utterance, &fp());
        assert_eq!(p.utterance.as_deref(), Some("Note: line one\nline two"));
    }

    #[test]
    fn expected_kind_of_turns() {
        assert_eq!(ExpectedKind::of(&Turn::agent("x")), Some(ExpectedKind::Utterance));
        assert_eq!(ExpectedKind::of(&Turn::action("a", ["v"])), Some(ExpectedKind::Action));
        assert_eq!(ExpectedKind::of(&Turn::customer("x")), None);
    }
}
