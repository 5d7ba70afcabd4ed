use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::remote::RemoteAgent;
use crate::parse::ExpectedKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("agent unavailable: {0}")]
    Unavailable(String),
    #[error("agent timed out")]
    Timeout,
    #[error("context carries no action plan")]
    MissingPlanInContext,
    #[error("invalid agent response: {0}")]
    InvalidResponse(String),
}

/// What an agent sees for one turn.
#[derive(Debug, Clone, Copy)]
pub struct AgentRequest<'a> {
    pub context: &'a str,
    pub expected_kind: ExpectedKind,
    /// Gold target string. Only test doubles may look at it.
    pub gold_target: &'a str,
}

pub trait Agent: Send + Sync {
    fn respond(&self, request: &AgentRequest<'_>) -> Result<String, AgentError>;
}

/// Returns the gold target verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl Agent for OracleAgent {
    fn respond(&self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        Ok(request.gold_target.to_string())
    }
}

const ACKNOWLEDGEMENTS: [&str; 3] =
    ["Okay, one moment please.", "Sure, let me look into that for you.", "Thank you, let me check that."];

static PLAN_SUFFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)flow:(?P<flow>[^;]*);\s*action_plan:(?P<plan>[^;]*);\s*$").unwrap());

/// Test double that executes whatever the context's plan says next.
///
/// On action turns it emits the plan head with the value the customer gave
/// most recently (after the last action), and on utterance turns or with an
/// empty plan it emits a fixed acknowledgement chosen by `seed`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlanFollower {
    pub seed: u64,
}

impl PlanFollower {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn acknowledgement(&self) -> &'static str {
        ACKNOWLEDGEMENTS[(self.seed % ACKNOWLEDGEMENTS.len() as u64) as usize]
    }
}

/// Customer text after the last action in `history`, reduced to the part a
/// form field would hold: lowercased, what follows the last ` is `, without
/// trailing punctuation.
pub fn latest_customer_value(history: &str) -> String {
    let at_turn = |marker: &str| {
        history
            .match_indices(marker)
            .filter(|(i, _)| *i == 0 || history[..*i].ends_with(' '))
            .map(|(i, _)| i)
            .last()
    };
    let Some(customer) = at_turn("customer: ") else {
        return String::new();
    };
    if at_turn("action: ").is_some_and(|a| a > customer) {
        return String::new();
    }
    let text = &history[customer + "customer: ".len()..];
    let text = text.split(" agent: ").next().unwrap_or_default().to_lowercase();
    let value = match text.rfind(" is ") {
        Some(i) => &text[i + 4..],
        None => &text[..],
    };
    value.trim().trim_end_matches(['.', ',', '!', '?', ';', ':']).trim().to_string()
}

impl Agent for PlanFollower {
    fn respond(&self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        let caps = PLAN_SUFFIX.captures(request.context).ok_or(AgentError::MissingPlanInContext)?;
        let flow = caps["flow"].trim();
        let head = caps["plan"].split(',').map(str::trim).find(|a| !a.is_empty());
        match (request.expected_kind, head) {
            (ExpectedKind::Action, Some(action)) => {
                let history = &request.context[..caps.get(0).unwrap().start()];
                Ok(format!("flow: {flow}; action: {action}: {}", latest_customer_value(history.trim_end())))
            }
            _ => Ok(format!("flow: {flow}; agent: {}", self.acknowledgement())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Remote,
    Oracle,
    PlanFollower,
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "remote" => Ok(AgentKind::Remote),
            "oracle" => Ok(AgentKind::Oracle),
            "plan-follower" => Ok(AgentKind::PlanFollower),
            other => Err(format!("unknown agent kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Remote(RemoteAgent),
    Oracle(OracleAgent),
    PlanFollower(PlanFollower),
}

/// One of the built-in agents, selected by kind.
#[derive(Debug, Clone)]
pub struct AgentClient {
    pub kind: AgentKind,
    pub endpoint: Option<String>,
    pub seed: u64,
    backend: Backend,
}

impl AgentClient {
    pub fn oracle() -> Self {
        Self { kind: AgentKind::Oracle, endpoint: None, seed: 0, backend: Backend::Oracle(OracleAgent) }
    }

    pub fn plan_follower(seed: u64) -> Self {
        Self { kind: AgentKind::PlanFollower, endpoint: None, seed, backend: Backend::PlanFollower(PlanFollower::new(seed)) }
    }

    pub fn remote(endpoint: impl Into<String>, timeout: std::time::Duration) -> Self {
        let endpoint = endpoint.into();
        let backend = Backend::Remote(RemoteAgent::new(endpoint.clone(), timeout));
        Self { kind: AgentKind::Remote, endpoint: Some(endpoint), seed: 0, backend }
    }

    /// `Remote` needs an endpoint; the mocks ignore it.
    pub fn new(kind: AgentKind, endpoint: Option<String>, seed: u64) -> Result<Self, AgentError> {
        match kind {
            AgentKind::Oracle => Ok(Self { seed, ..Self::oracle() }),
            AgentKind::PlanFollower => Ok(Self::plan_follower(seed)),
            AgentKind::Remote => match endpoint.filter(|e| !e.trim().is_empty()) {
                Some(e) => Ok(Self { seed, ..Self::remote(e, super::remote::DEFAULT_TIMEOUT) }),
                None => Err(AgentError::Unavailable("remote agent needs an endpoint".into())),
            },
        }
    }
}

impl Agent for AgentClient {
    fn respond(&self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        match &self.backend {
            Backend::Remote(a) => a.respond(request),
            Backend::Oracle(a) => a.respond(request),
            Backend::PlanFollower(a) => a.respond(request),
        }
    }
}
