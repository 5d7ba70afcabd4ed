use indexmap::IndexSet;

use super::{Fact, Operator, OperatorKind, PlannerError, PlanningProblem};
use crate::kb::KnowledgeBase;

/// What is already known when a flow's problem is grounded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundingInput {
    /// Slots whose values are already in the dialogue context.
    pub initial_slots: Vec<String>,
    /// Actions the agent has already executed. Their `did-*` and
    /// `button-done_*` facts start true; actions outside the flow are ignored.
    pub executed: Vec<String>,
}

pub(crate) fn slot_prop(slot: &str) -> String {
    format!("slot_{slot}")
}

pub(crate) fn button_prop(action: &str) -> String {
    format!("button-done_{action}")
}

pub(crate) fn did_prop(action: &str) -> String {
    format!("did-{action}")
}

pub(crate) fn step_prop(flow: &str, step: usize) -> String {
    format!("flow-step_{flow}_s{step}")
}

pub(crate) fn finished_prop(flow: &str) -> String {
    format!("finished-flow_{flow}")
}

pub fn ground_problem(
    kb: &KnowledgeBase,
    flow: &str,
    initial_slots: &[&str],
) -> Result<PlanningProblem, PlannerError> {
    let input = GroundingInput {
        initial_slots: initial_slots.iter().map(|s| s.to_string()).collect(),
        executed: Vec::new(),
    };
    ground_problem_from(kb, flow, &input)
}

/// Compiles `flow` into a STRIPS problem whose goal is `finished-flow_<flow>`.
///
/// Only the flow's own actions and slots are grounded. Operators are
/// declared step by step in flow order: each action's slot gathering, its
/// button completions and its execution, followed by the flow bookkeeping
/// (`choose-flow`, one `next-step-flow` per step, `complete-flow`).
pub fn ground_problem_from(
    kb: &KnowledgeBase,
    flow: &str,
    input: &GroundingInput,
) -> Result<PlanningProblem, PlannerError> {
    let spec = kb.workflow(flow).ok_or_else(|| PlannerError::UnknownFlow(flow.to_string()))?;
    let provided = kb.provided_slots();

    let mut props: IndexSet<String> = IndexSet::new();
    let mut operators = Vec::new();
    let mut declared_slots: IndexSet<&str> = IndexSet::new();
    let mut declared_actions: IndexSet<&str> = IndexSet::new();

    for action in &spec.action_sequence {
        if !declared_actions.insert(action) {
            continue;
        }
        let req = kb
            .action(action)
            .ok_or_else(|| PlannerError::Malformed(format!("undeclared action `{action}`")))?;

        for slot in req.user_slots().chain(&req.provides) {
            if declared_slots.insert(slot) {
                let prop = slot_prop(slot);
                props.insert(prop.clone());
                if !provided.contains(slot.as_str()) {
                    operators.push(Operator::new(
                        format!("get-slot {prop}"),
                        OperatorKind::GetSlot,
                        vec![],
                        vec![Fact::holds(prop)],
                    ));
                }
            }
        }

        let button = button_prop(action);
        props.insert(button.clone());
        for combo in req.combinations() {
            let mut name = format!("complete-button-slot button_{action}");
            for slot in &combo {
                name.push_str(" slot_");
                name.push_str(slot);
            }
            operators.push(Operator::new(
                name,
                OperatorKind::CompleteButton,
                combo.iter().map(|s| Fact::holds(slot_prop(s))).collect(),
                vec![Fact::holds(button.clone())],
            ));
        }

        let did = did_prop(action);
        props.insert(did.clone());
        let mut effects = vec![Fact::holds(did)];
        effects.extend(req.provides.iter().map(|s| Fact::holds(slot_prop(s))));
        operators.push(Operator::new(
            format!("do action_{action}"),
            OperatorKind::DoAction,
            vec![Fact::holds(button)],
            effects,
        ));
    }

    let steps = spec.action_sequence.len();
    for i in 0..=steps {
        props.insert(step_prop(flow, i));
    }
    let finished = finished_prop(flow);
    props.insert(finished.clone());

    operators.push(Operator::new(
        format!("choose-flow flow_{flow}"),
        OperatorKind::ChooseFlow,
        vec![],
        vec![Fact::holds(step_prop(flow, 0))],
    ));
    for (i, action) in spec.action_sequence.iter().enumerate() {
        // advancing consumes the execution so a repeated action must run again
        operators.push(Operator::new(
            format!("next-step-flow flow_{flow} s_{i} s_{} button_{action}", i + 1),
            OperatorKind::NextStep,
            vec![Fact::holds(step_prop(flow, i)), Fact::holds(did_prop(action))],
            vec![
                Fact::negated(step_prop(flow, i)),
                Fact::holds(step_prop(flow, i + 1)),
                Fact::negated(did_prop(action)),
            ],
        ));
    }
    operators.push(Operator::new(
        format!("complete-flow flow_{flow} s_{steps}"),
        OperatorKind::CompleteFlow,
        vec![Fact::holds(step_prop(flow, steps))],
        vec![Fact::holds(finished.clone())],
    ));

    let mut initial: Vec<String> = input
        .initial_slots
        .iter()
        .map(|s| slot_prop(s))
        .filter(|p| props.contains(p))
        .collect();
    for action in &input.executed {
        if declared_actions.contains(action.as_str()) {
            initial.push(did_prop(action));
            initial.push(button_prop(action));
        }
    }
    let initial: Vec<&str> = initial.iter().map(String::as_str).collect();

    PlanningProblem::new(flow, props, operators, &initial, vec![Fact::holds(finished)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{applicable, apply, State};

    /// Two workflows, grounded by hand:
    /// `w1 = [pull-up-account, verify-identity]`, `w2 = [send-link]`.
    fn toy_kb() -> KnowledgeBase {
        KnowledgeBase::from_json_str(
            r#"{
              "workflows": {"w1": ["pull-up-account", "verify-identity"], "w2": ["send-link"]},
              "prefix_groups": {"w1": "w1", "w2": "w2"},
              "actions": {
                "pull-up-account": {"kind": "ONE_OF", "slots": ["customer_name", "account_id"]},
                "verify-identity": {"kind": "ANY_K", "k": 2, "slots": ["customer_name", "zip_code", "order_id"]},
                "send-link": {"kind": "NONE"}
              }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn toy_grounding_matches_hand_enumeration() {
        let p = ground_problem(&toy_kb(), "w1", &[]).unwrap();
        let names: Vec<&str> = p.operators.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "get-slot slot_customer_name",
                "get-slot slot_account_id",
                "complete-button-slot button_pull-up-account slot_customer_name",
                "complete-button-slot button_pull-up-account slot_account_id",
                "do action_pull-up-account",
                "get-slot slot_zip_code",
                "get-slot slot_order_id",
                "complete-button-slot button_verify-identity slot_customer_name slot_zip_code",
                "complete-button-slot button_verify-identity slot_customer_name slot_order_id",
                "complete-button-slot button_verify-identity slot_zip_code slot_order_id",
                "do action_verify-identity",
                "choose-flow flow_w1",
                "next-step-flow flow_w1 s_0 s_1 button_pull-up-account",
                "next-step-flow flow_w1 s_1 s_2 button_verify-identity",
                "complete-flow flow_w1 s_2",
            ]
        );
        let props: Vec<&str> = p.propositions.iter().map(String::as_str).collect();
        assert_eq!(
            props,
            [
                "slot_customer_name",
                "slot_account_id",
                "button-done_pull-up-account",
                "did-pull-up-account",
                "slot_zip_code",
                "slot_order_id",
                "button-done_verify-identity",
                "did-verify-identity",
                "flow-step_w1_s0",
                "flow-step_w1_s1",
                "flow-step_w1_s2",
                "finished-flow_w1",
            ]
        );
        assert_eq!(p.goal, [Fact::holds("finished-flow_w1")]);
        assert_eq!(p.initial.true_propositions().count(), 0);
    }

    #[test]
    fn do_action_needs_its_button() {
        let p = ground_problem(&toy_kb(), "w1", &[]).unwrap();
        let do_pull = p.operator("do action_pull-up-account").unwrap();
        assert_eq!(p.initial.get("button-done_pull-up-account"), Some(false));
        assert!(!applicable(&p.initial, do_pull).unwrap());
        let get_name = p.operator("get-slot slot_customer_name").unwrap();
        assert!(applicable(&p.initial, get_name).unwrap());
    }

    #[test]
    fn get_slot_sets_only_its_slot() {
        let p = ground_problem(&toy_kb(), "w1", &[]).unwrap();
        let op = p.operator("get-slot slot_zip_code").unwrap();
        let next = apply(&p.initial, op).unwrap();
        let trues: Vec<&str> = next.true_propositions().collect();
        assert_eq!(trues, ["slot_zip_code"]);
    }

    #[test]
    fn none_requirement_has_unconditioned_button() {
        let p = ground_problem(&toy_kb(), "w2", &[]).unwrap();
        let button = p.operator("complete-button-slot button_send-link").unwrap();
        assert!(button.preconditions.is_empty());
        assert!(!p.operators.iter().any(|o| o.kind == OperatorKind::GetSlot));
    }

    #[test]
    fn initial_slots_and_executed_actions() {
        let input = GroundingInput {
            initial_slots: vec!["zip_code".into(), "not_in_this_flow".into()],
            executed: vec!["pull-up-account".into(), "send-link".into()],
        };
        let p = ground_problem_from(&toy_kb(), "w1", &input).unwrap();
        let trues: Vec<&str> = p.initial.true_propositions().collect();
        assert_eq!(trues, ["button-done_pull-up-account", "did-pull-up-account", "slot_zip_code"]);
        assert_eq!(p.initial, State::from_true(p.propositions.iter().map(String::as_str), trues));
    }

    #[test]
    fn unknown_flow() {
        assert_eq!(
            ground_problem(&toy_kb(), "nope", &[]).unwrap_err(),
            PlannerError::UnknownFlow("nope".into())
        );
    }
}
