//! STRIPS planning over dialogue workflows.
//!
//! A [`PlanningProblem`] is a set of boolean propositions, grounded operators
//! with precondition and effect facts, a total initial state and a goal.
//! Applying an operator overwrites the state with its effects and leaves
//! every other proposition untouched.
//!
//! [`ground_problem`] compiles one knowledge-base workflow into such a
//! problem, [`solve`] finds a shortest plan by breadth-first search,
//! [`emit_pddl`]/[`load_pddl`] convert to and from grounded PDDL, and
//! [`strip_plan`]/[`remaining_plan`] turn plans into prompt-ready action lists.

mod ground;
mod pddl;
mod plan;
mod search;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ground::{ground_problem, ground_problem_from, GroundingInput};
pub use pddl::{emit_pddl, load_pddl, PddlError};
pub use plan::{remaining_plan, strip_plan, ActionPlan, PlanEntry, PlanMode};
pub use search::{solve, solve_with, SolveOptions, DEFAULT_NODE_LIMIT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlannerError {
    #[error("unknown proposition `{0}`")]
    UnknownProposition(String),
    #[error("operator `{0}` is not applicable in this state")]
    NotApplicable(String),
    #[error("unknown workflow `{0}`")]
    UnknownFlow(String),
    #[error("goal is unreachable")]
    Unsolvable,
    #[error("search budget of {0} nodes exceeded")]
    SearchBudgetExceeded(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// A single proposition assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fact {
    pub proposition: String,
    pub value: bool,
}

impl Fact {
    pub fn holds(proposition: impl Into<String>) -> Self {
        Self { proposition: proposition.into(), value: true }
    }

    pub fn negated(proposition: impl Into<String>) -> Self {
        Self { proposition: proposition.into(), value: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OperatorKind {
    GetSlot,
    CompleteButton,
    DoAction,
    ChooseFlow,
    NextStep,
    CompleteFlow,
}

impl OperatorKind {
    /// Leading keyword of operator names of this kind.
    pub fn keyword(self) -> &'static str {
        match self {
            OperatorKind::GetSlot => "get-slot",
            OperatorKind::CompleteButton => "complete-button-slot",
            OperatorKind::DoAction => "do",
            OperatorKind::ChooseFlow => "choose-flow",
            OperatorKind::NextStep => "next-step-flow",
            OperatorKind::CompleteFlow => "complete-flow",
        }
    }

    pub fn from_operator_name(name: &str) -> Option<Self> {
        let head = name.split(' ').next()?;
        [
            OperatorKind::GetSlot,
            OperatorKind::CompleteButton,
            OperatorKind::DoAction,
            OperatorKind::ChooseFlow,
            OperatorKind::NextStep,
            OperatorKind::CompleteFlow,
        ]
        .into_iter()
        .find(|k| k.keyword() == head)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operator {
    pub name: String,
    pub kind: OperatorKind,
    pub preconditions: Vec<Fact>,
    pub effects: Vec<Fact>,
}

impl Operator {
    pub fn new(
        name: impl Into<String>,
        kind: OperatorKind,
        preconditions: Vec<Fact>,
        effects: Vec<Fact>,
    ) -> Self {
        Self { name: name.into(), kind, preconditions, effects }
    }

    fn check_consistent(&self) -> Result<(), PlannerError> {
        for facts in [&self.preconditions, &self.effects] {
            let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
            for f in facts {
                if seen.insert(&f.proposition, f.value).is_some_and(|v| v != f.value) {
                    return Err(PlannerError::Malformed(format!(
                        "operator `{}` assigns `{}` both values",
                        self.name, f.proposition
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Total assignment of truth values to a problem's propositions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct State {
    assignment: BTreeMap<String, bool>,
}

impl State {
    /// Every proposition false except those in `true_props`.
    pub fn from_true<'a, I, J>(propositions: I, true_props: J) -> Self
    where
        I: IntoIterator<Item = &'a str>,
        J: IntoIterator<Item = &'a str>,
    {
        let mut assignment: BTreeMap<String, bool> =
            propositions.into_iter().map(|p| (p.to_string(), false)).collect();
        for p in true_props {
            if let Some(v) = assignment.get_mut(p) {
                *v = true;
            }
        }
        Self { assignment }
    }

    pub fn get(&self, proposition: &str) -> Option<bool> {
        self.assignment.get(proposition).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn true_propositions(&self) -> impl Iterator<Item = &str> {
        self.assignment.iter().filter(|(_, v)| **v).map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> {
        self.assignment.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn satisfies(&self, facts: &[Fact]) -> Result<bool, PlannerError> {
        for f in facts {
            match self.get(&f.proposition) {
                None => return Err(PlannerError::UnknownProposition(f.proposition.clone())),
                Some(v) if v != f.value => return Ok(false),
                Some(_) => {}
            }
        }
        Ok(true)
    }
}

/// True iff every precondition fact of `op` holds in `state`.
pub fn applicable(state: &State, op: &Operator) -> Result<bool, PlannerError> {
    state.satisfies(&op.preconditions)
}

/// `state` overwritten by the effects of `op`.
pub fn apply(state: &State, op: &Operator) -> Result<State, PlannerError> {
    if !applicable(state, op)? {
        return Err(PlannerError::NotApplicable(op.name.clone()));
    }
    let mut next = state.clone();
    for f in &op.effects {
        match next.assignment.get_mut(&f.proposition) {
            Some(v) => *v = f.value,
            None => return Err(PlannerError::UnknownProposition(f.proposition.clone())),
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanningProblem {
    pub name: String,
    pub propositions: IndexSet<String>,
    /// Declaration order doubles as the search's tie-breaking order.
    pub operators: Vec<Operator>,
    pub initial: State,
    pub goal: Vec<Fact>,
}

impl PlanningProblem {
    pub fn new(
        name: impl Into<String>,
        propositions: IndexSet<String>,
        operators: Vec<Operator>,
        initial_true: &[&str],
        goal: Vec<Fact>,
    ) -> Result<Self, PlannerError> {
        let initial = State::from_true(propositions.iter().map(String::as_str), initial_true.iter().copied());
        let problem = Self { name: name.into(), propositions, operators, initial, goal };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let known = |p: &str| {
            if self.propositions.contains(p) {
                Ok(())
            } else {
                Err(PlannerError::UnknownProposition(p.to_string()))
            }
        };
        for op in &self.operators {
            op.check_consistent()?;
            for f in op.preconditions.iter().chain(&op.effects) {
                known(&f.proposition)?;
            }
        }
        for f in &self.goal {
            known(&f.proposition)?;
        }
        if self.initial.len() != self.propositions.len()
            || self.propositions.iter().any(|p| self.initial.get(p).is_none())
        {
            return Err(PlannerError::Malformed("initial state is not total".into()));
        }
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = self.operators.iter().find(|o| !names.insert(o.name.as_str())) {
            return Err(PlannerError::Malformed(format!("operator `{}` declared twice", dup.name)));
        }
        Ok(())
    }

    pub fn operator(&self, name: &str) -> Option<&Operator> {
        self.operators.iter().find(|o| o.name == name)
    }

    pub fn is_goal(&self, state: &State) -> Result<bool, PlannerError> {
        state.satisfies(&self.goal)
    }

    /// Replays `plan` from the initial state, failing on the first
    /// inapplicable or unknown step. Returns the final state.
    pub fn execute(&self, plan: &Plan) -> Result<State, PlannerError> {
        let mut state = self.initial.clone();
        for step in &plan.steps {
            let op = self
                .operator(step)
                .ok_or_else(|| PlannerError::Malformed(format!("unknown operator `{step}`")))?;
            state = apply(&state, op)?;
        }
        Ok(state)
    }

    /// True iff `plan` replays cleanly and ends in a goal state.
    pub fn validates(&self, plan: &Plan) -> bool {
        self.execute(plan).and_then(|s| self.is_goal(&s)).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<String>,
}

impl Plan {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Self {
        Self { steps: steps.into_iter().map(Into::into).collect() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Action names of the `do action_*` steps, in order.
    pub fn action_projection(&self) -> Vec<String> {
        strip_plan(self, false).actions().map(str::to_string).collect()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            writeln!(f, "{step}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn props(names: &[&str]) -> IndexSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_preconditions_are_always_applicable() {
        let s = State::from_true(["a", "b"], ["b"]);
        let op = Operator::new("noop", OperatorKind::GetSlot, vec![], vec![]);
        assert!(applicable(&s, &op).unwrap());
        assert_eq!(apply(&s, &op).unwrap(), s);
    }

    #[test]
    fn apply_overwrites_only_effects() {
        let s = State::from_true(["a", "b", "c"], ["a"]);
        let op = Operator::new(
            "flip",
            OperatorKind::NextStep,
            vec![Fact::holds("a")],
            vec![Fact::negated("a"), Fact::holds("c")],
        );
        let next = apply(&s, &op).unwrap();
        assert_eq!(next.get("a"), Some(false));
        assert_eq!(next.get("b"), Some(false));
        assert_eq!(next.get("c"), Some(true));
        assert_eq!(next.len(), 3);
    }

    #[test]
    fn inapplicable_operator_is_rejected() {
        let s = State::from_true(["a"], []);
        let op = Operator::new("x", OperatorKind::DoAction, vec![Fact::holds("a")], vec![]);
        assert!(!applicable(&s, &op).unwrap());
        assert_eq!(apply(&s, &op), Err(PlannerError::NotApplicable("x".into())));
    }

    #[test]
    fn unknown_propositions_are_reported() {
        let s = State::from_true(["a"], []);
        let op = Operator::new("x", OperatorKind::DoAction, vec![Fact::holds("zzz")], vec![]);
        assert_eq!(applicable(&s, &op), Err(PlannerError::UnknownProposition("zzz".into())));
    }

    #[test]
    fn inconsistent_operators_are_malformed() {
        let op = Operator::new(
            "bad",
            OperatorKind::GetSlot,
            vec![],
            vec![Fact::holds("a"), Fact::negated("a")],
        );
        let err = PlanningProblem::new("p", props(&["a"]), vec![op], &[], vec![]).unwrap_err();
        assert!(matches!(err, PlannerError::Malformed(_)));
    }

    #[test]
    fn goal_outside_propositions_is_rejected() {
        let err = PlanningProblem::new("p", props(&["a"]), vec![], &[], vec![Fact::holds("b")])
            .unwrap_err();
        assert_eq!(err, PlannerError::UnknownProposition("b".into()));
    }

    #[test]
    fn operator_kind_from_name() {
        assert_eq!(
            OperatorKind::from_operator_name("do action_pull-up-account"),
            Some(OperatorKind::DoAction)
        );
        assert_eq!(
            OperatorKind::from_operator_name("complete-flow flow_x s_2"),
            Some(OperatorKind::CompleteFlow)
        );
        assert_eq!(OperatorKind::from_operator_name("launch rockets"), None);
    }
}
