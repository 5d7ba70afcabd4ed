//! Workflow knowledge base: workflows, their prescribed action sequences,
//! flow prefix groups, workflow groups and per-action slot requirements.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

static ABCD_KB_JSON: &str = include_str!("../data/abcd_kb.json");

static TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[a-z0-9]+(?:[_-][a-z0-9]+)*$").unwrap());

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KbError {
    #[error("malformed knowledge base document: {0}")]
    MalformedDocument(String),
    #[error("workflow `{workflow}` references undeclared action `{action}`")]
    UnknownActionReference { workflow: String, action: String },
    #[error("workflow `{0}` is declared more than once")]
    DuplicateWorkflow(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
}

/// How many of an action's slots must be available before it can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequirementKind {
    All,
    AnyK,
    OneOf,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRequirement {
    pub kind: RequirementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub slots: Vec<String>,
    /// Slots needed on top of whatever combination `kind` admits.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub required: Vec<String>,
    /// Slots made available by executing the action rather than asked of the user.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provides: Vec<String>,
}

impl SlotRequirement {
    pub fn all<S: Into<String>>(slots: impl IntoIterator<Item = S>) -> Self {
        Self::with_kind(RequirementKind::All, None, slots)
    }

    pub fn any_k<S: Into<String>>(k: usize, slots: impl IntoIterator<Item = S>) -> Self {
        Self::with_kind(RequirementKind::AnyK, Some(k), slots)
    }

    pub fn one_of<S: Into<String>>(slots: impl IntoIterator<Item = S>) -> Self {
        Self::with_kind(RequirementKind::OneOf, None, slots)
    }

    pub fn none() -> Self {
        Self::with_kind(RequirementKind::None, None, Vec::<String>::new())
    }

    fn with_kind<S: Into<String>>(
        kind: RequirementKind,
        k: Option<usize>,
        slots: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            kind,
            k,
            slots: slots.into_iter().map(Into::into).collect(),
            required: Vec::new(),
            provides: Vec::new(),
        }
    }

    fn validate(&self, action: &str) -> Result<(), KbError> {
        let bad = |msg: String| Err(KbError::MalformedDocument(format!("action `{action}`: {msg}")));
        let n = self.slots.len();
        match self.kind {
            RequirementKind::AnyK => match self.k {
                Some(k) if (1..=n).contains(&k) => {}
                Some(k) => return bad(format!("ANY_K needs 1 <= k <= {n}, got k = {k}")),
                None => return bad("ANY_K requires `k`".into()),
            },
            _ if self.k.is_some() => return bad("`k` is only valid for ANY_K".into()),
            RequirementKind::All | RequirementKind::OneOf if n == 0 => {
                return bad("ALL/ONE_OF need at least one slot".into())
            }
            RequirementKind::None if n != 0 => return bad("NONE must not list slots".into()),
            _ => {}
        }
        let mut seen = HashSet::new();
        for slot in self.slots.iter().chain(&self.required) {
            check_token(slot, "slot")?;
            if !seen.insert(slot) {
                return bad(format!("slot `{slot}` listed twice"));
            }
        }
        for slot in &self.provides {
            check_token(slot, "slot")?;
        }
        Ok(())
    }

    /// Every admissible slot combination, each followed by the mandatory
    /// extra slots. `NONE` yields a single combination of just those extras.
    pub fn combinations(&self) -> Vec<Vec<String>> {
        let base: Vec<Vec<String>> = match self.kind {
            RequirementKind::All => vec![self.slots.clone()],
            RequirementKind::OneOf => self.slots.iter().map(|s| vec![s.clone()]).collect(),
            RequirementKind::None => vec![Vec::new()],
            RequirementKind::AnyK => {
                use itertools::Itertools;
                let k = self.k.unwrap_or(self.slots.len());
                self.slots.iter().cloned().combinations(k).collect()
            }
        };
        base.into_iter()
            .map(|mut combo| {
                combo.extend(self.required.iter().cloned());
                combo
            })
            .collect()
    }

    /// Slots the user may be asked for, in declaration order.
    pub fn user_slots(&self) -> impl Iterator<Item = &String> {
        self.slots.iter().chain(&self.required)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowSpec {
    pub name: String,
    pub action_sequence: Vec<String>,
    pub prefix: String,
}

/// Insert a provider action before every occurrence of a guarded action,
/// which in turn now needs the slot the provider produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbPerturbation {
    pub new_slot: String,
    pub guarded_action: String,
    pub provider_action: String,
}

impl KbPerturbation {
    /// The account-compromise scenario: `verify-identity` additionally needs
    /// `account-uncompromised`, which only `extra-verification` provides.
    pub fn extra_verification() -> Self {
        Self {
            new_slot: "account-uncompromised".into(),
            guarded_action: "verify-identity".into(),
            provider_action: "extra-verification".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    workflows: IndexMap<String, WorkflowSpec>,
    groups: IndexMap<String, Vec<String>>,
    actions: IndexMap<String, SlotRequirement>,
}

impl KnowledgeBase {
    /// The 55-workflow ABCD knowledge base shipped with the crate.
    pub fn abcd() -> Self {
        Self::from_json_str(ABCD_KB_JSON).expect("embedded knowledge base is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self, KbError> {
        let doc: KbDocument =
            serde_json::from_str(text).map_err(|e| KbError::MalformedDocument(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, KbError> {
        let doc: KbDocument = serde_json::from_reader(reader)
            .map_err(|e| KbError::MalformedDocument(e.to_string()))?;
        Self::from_document(doc)
    }

    fn from_document(doc: KbDocument) -> Result<Self, KbError> {
        if doc.workflows.0.is_empty() {
            return Err(KbError::MalformedDocument("workflow table is empty".into()));
        }
        if doc.actions.0.is_empty() {
            return Err(KbError::MalformedDocument("action table is empty".into()));
        }

        let mut actions = IndexMap::new();
        for (name, req) in doc.actions.0 {
            check_token(&name, "action")?;
            req.validate(&name)?;
            if actions.insert(name.clone(), req).is_some() {
                return Err(KbError::MalformedDocument(format!("action `{name}` declared twice")));
            }
        }

        let mut prefixes = IndexMap::new();
        for (flow, prefix) in doc.prefix_groups.0 {
            if prefixes.insert(flow.clone(), prefix).is_some() {
                return Err(KbError::MalformedDocument(format!(
                    "workflow `{flow}` has more than one prefix group"
                )));
            }
        }

        let mut workflows = IndexMap::new();
        for (name, sequence) in doc.workflows.0 {
            check_token(&name, "workflow")?;
            if workflows.contains_key(&name) {
                return Err(KbError::DuplicateWorkflow(name));
            }
            if sequence.is_empty() {
                return Err(KbError::MalformedDocument(format!(
                    "workflow `{name}` has an empty action sequence"
                )));
            }
            for action in &sequence {
                if !actions.contains_key(action) {
                    return Err(KbError::UnknownActionReference {
                        workflow: name.clone(),
                        action: action.clone(),
                    });
                }
            }
            if let Some(pair) = sequence.windows(2).find(|w| w[0] == w[1]) {
                return Err(KbError::MalformedDocument(format!(
                    "workflow `{name}` repeats `{}` back to back",
                    pair[0]
                )));
            }
            let prefix = prefixes.get(&name).cloned().ok_or_else(|| {
                KbError::MalformedDocument(format!("workflow `{name}` has no prefix group"))
            })?;
            if prefix.is_empty() || !name.starts_with(&prefix) {
                return Err(KbError::MalformedDocument(format!(
                    "prefix `{prefix}` is not a prefix of workflow `{name}`"
                )));
            }
            let spec = WorkflowSpec { name: name.clone(), action_sequence: sequence, prefix };
            workflows.insert(name, spec);
        }
        if let Some(stray) = prefixes.keys().find(|f| !workflows.contains_key(*f)) {
            return Err(KbError::MalformedDocument(format!(
                "prefix group given for undeclared workflow `{stray}`"
            )));
        }

        let mut grouped = HashSet::new();
        for (group, members) in &doc.groups {
            for flow in members {
                if !workflows.contains_key(flow) {
                    return Err(KbError::MalformedDocument(format!(
                        "group `{group}` lists undeclared workflow `{flow}`"
                    )));
                }
                if !grouped.insert(flow.clone()) {
                    return Err(KbError::MalformedDocument(format!(
                        "workflow `{flow}` belongs to more than one group"
                    )));
                }
            }
        }
        if !doc.groups.is_empty() && grouped.len() != workflows.len() {
            let missing = workflows.keys().find(|f| !grouped.contains(*f)).unwrap();
            return Err(KbError::MalformedDocument(format!(
                "workflow `{missing}` belongs to no group"
            )));
        }

        Ok(Self { workflows, groups: doc.groups, actions })
    }

    pub fn to_json_string(&self) -> String {
        let doc = KbDocumentOut {
            workflows: self
                .workflows
                .iter()
                .map(|(k, w)| (k.as_str(), &w.action_sequence))
                .collect(),
            prefix_groups: self.workflows.iter().map(|(k, w)| (k.as_str(), &w.prefix)).collect(),
            groups: &self.groups,
            actions: &self.actions,
        };
        serde_json::to_string_pretty(&doc).expect("knowledge base serializes")
    }

    pub fn workflow(&self, flow: &str) -> Option<&WorkflowSpec> {
        self.workflows.get(flow)
    }

    pub fn workflows(&self) -> impl Iterator<Item = &WorkflowSpec> {
        self.workflows.values()
    }

    pub fn workflow_names(&self) -> impl Iterator<Item = &str> {
        self.workflows.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.workflows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workflows.is_empty()
    }

    pub fn action(&self, action: &str) -> Option<&SlotRequirement> {
        self.actions.get(action)
    }

    pub fn actions(&self) -> impl Iterator<Item = (&str, &SlotRequirement)> {
        self.actions.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn action_names(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }

    /// Slots some action produces as an effect instead of asking the user.
    pub fn provided_slots(&self) -> HashSet<&str> {
        self.actions.values().flat_map(|r| r.provides.iter().map(String::as_str)).collect()
    }

    /// The workflow group a flow belongs to. Without an explicit group table
    /// every workflow shares one anonymous group.
    pub fn group_of(&self, flow: &str) -> Option<&str> {
        if self.groups.is_empty() {
            return self.workflows.contains_key(flow).then_some("");
        }
        self.groups
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == flow))
            .map(|(g, _)| g.as_str())
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.groups.iter().map(|(g, m)| (g.as_str(), m.as_slice()))
    }

    pub fn apply_perturbation(
        &self,
        p: &KbPerturbation,
    ) -> Result<(KnowledgeBase, Vec<String>), KbError> {
        let invalid = |m: String| Err(KbError::InvalidPerturbation(m));
        for (what, token) in [
            ("slot", &p.new_slot),
            ("action", &p.guarded_action),
            ("action", &p.provider_action),
        ] {
            if !TOKEN.is_match(token) {
                return invalid(format!("`{token}` is not a valid {what} name"));
            }
        }
        let Some(guarded) = self.actions.get(&p.guarded_action) else {
            return invalid(format!("guarded action `{}` is not in the knowledge base", p.guarded_action));
        };
        if self.actions.contains_key(&p.provider_action) {
            return invalid(format!("provider action `{}` already exists", p.provider_action));
        }
        if guarded.user_slots().any(|s| *s == p.new_slot) {
            return invalid(format!("`{}` already requires slot `{}`", p.guarded_action, p.new_slot));
        }

        let mut next = self.clone();
        next.actions[&p.guarded_action].required.push(p.new_slot.clone());
        let mut provider = SlotRequirement::none();
        provider.provides.push(p.new_slot.clone());
        next.actions.insert(p.provider_action.clone(), provider);

        let mut changed = Vec::new();
        for (name, spec) in next.workflows.iter_mut() {
            if !spec.action_sequence.contains(&p.guarded_action) {
                continue;
            }
            let mut sequence = Vec::with_capacity(spec.action_sequence.len() + 1);
            for action in &spec.action_sequence {
                if *action == p.guarded_action {
                    sequence.push(p.provider_action.clone());
                }
                sequence.push(action.clone());
            }
            spec.action_sequence = sequence;
            changed.push(name.clone());
        }
        Ok((next, changed))
    }
}

/// Prefix group label of a flow. Flows outside the knowledge base fall back
/// to everything up to and including the first underscore.
pub fn prefix_of<'a>(kb: &'a KnowledgeBase, flow: &'a str) -> &'a str {
    match kb.workflow(flow) {
        Some(spec) => &spec.prefix,
        None => match flow.find('_') {
            Some(i) => &flow[..=i],
            None => flow,
        },
    }
}

fn check_token(token: &str, what: &str) -> Result<(), KbError> {
    if TOKEN.is_match(token) {
        Ok(())
    } else {
        Err(KbError::MalformedDocument(format!("`{token}` is not a valid {what} name")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbDocument {
    workflows: Entries<Vec<String>>,
    prefix_groups: Entries<String>,
    #[serde(default)]
    groups: IndexMap<String, Vec<String>>,
    actions: Entries<SlotRequirement>,
}

#[derive(Serialize)]
struct KbDocumentOut<'a> {
    workflows: IndexMap<&'a str, &'a Vec<String>>,
    prefix_groups: IndexMap<&'a str, &'a String>,
    #[serde(skip_serializing_if = "IndexMap::is_empty")]
    groups: &'a IndexMap<String, Vec<String>>,
    actions: &'a IndexMap<String, SlotRequirement>,
}

/// JSON object kept as an ordered list so duplicate keys stay visible.
struct Entries<V>(Vec<(String, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Entries<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor<V>(std::marker::PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = Entries<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, V>()? {
                    entries.push((k, v));
                }
                Ok(Entries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(std::marker::PhantomData))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(workflows: &str, actions: &str) -> String {
        let prefixes: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(workflows)
                .unwrap()
                .keys()
                .map(|k| (k.clone(), serde_json::Value::String(k.clone())))
                .collect();
        format!(
            r#"{{"workflows": {workflows}, "prefix_groups": {}, "actions": {actions}}}"#,
            serde_json::Value::Object(prefixes)
        )
    }

    #[test]
    fn abcd_fixture_shape() {
        let kb = KnowledgeBase::abcd();
        assert_eq!(kb.len(), 55);
        assert_eq!(kb.action_names().count(), 30);
        assert_eq!(
            kb.workflow("recover_username").unwrap().action_sequence,
            ["pull-up-account", "verify-identity"]
        );
        assert_eq!(kb.group_of("shopping_cart"), Some("troubleshoot_site"));
        assert_eq!(kb.groups().count(), 10);
    }

    #[test]
    fn empty_workflow_table_is_malformed() {
        let err = KnowledgeBase::from_json_str(
            r#"{"workflows": {}, "prefix_groups": {}, "actions": {"a": {"kind": "NONE"}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, KbError::MalformedDocument(_)));
    }

    #[test]
    fn undeclared_action_is_rejected() {
        let doc = tiny(r#"{"w": ["a", "foo"]}"#, r#"{"a": {"kind": "NONE", "slots": []}}"#);
        assert_eq!(
            KnowledgeBase::from_json_str(&doc).unwrap_err(),
            KbError::UnknownActionReference { workflow: "w".into(), action: "foo".into() }
        );
    }

    #[test]
    fn duplicate_workflow_is_rejected() {
        let doc = r#"{"workflows": {"w": ["a"], "w": ["a"]}, "prefix_groups": {"w": "w"},
                      "actions": {"a": {"kind": "NONE"}}}"#;
        assert_eq!(
            KnowledgeBase::from_json_str(doc).unwrap_err(),
            KbError::DuplicateWorkflow("w".into())
        );
    }

    #[test]
    fn requirement_shapes_are_checked() {
        for bad in [
            r#"{"kind": "ANY_K", "k": 3, "slots": ["x", "y"]}"#,
            r#"{"kind": "ANY_K", "slots": ["x"]}"#,
            r#"{"kind": "ANY_K", "k": 0, "slots": ["x"]}"#,
            r#"{"kind": "ALL", "slots": []}"#,
            r#"{"kind": "ONE_OF", "slots": []}"#,
            r#"{"kind": "NONE", "slots": ["x"]}"#,
            r#"{"kind": "ONE_OF", "k": 1, "slots": ["x"]}"#,
            r#"{"kind": "ALL", "slots": ["Bad Name"]}"#,
        ] {
            let doc = tiny(r#"{"w": ["a"]}"#, &format!(r#"{{"a": {bad}}}"#));
            assert!(
                matches!(KnowledgeBase::from_json_str(&doc), Err(KbError::MalformedDocument(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn immediate_repeats_are_rejected() {
        let doc = tiny(r#"{"w": ["a", "a"]}"#, r#"{"a": {"kind": "NONE"}}"#);
        assert!(matches!(KnowledgeBase::from_json_str(&doc), Err(KbError::MalformedDocument(_))));
        let doc = tiny(r#"{"w": ["a", "b", "a"]}"#, r#"{"a": {"kind": "NONE"}, "b": {"kind": "NONE"}}"#);
        assert!(KnowledgeBase::from_json_str(&doc).is_ok());
    }

    #[test]
    fn prefix_lookup_and_fallback() {
        let kb = KnowledgeBase::abcd();
        assert_eq!(prefix_of(&kb, "status_service_added"), "status_");
        assert_eq!(prefix_of(&kb, "manage_change_name"), "manage_");
        assert_eq!(prefix_of(&kb, "out_of_stock_general"), "out_of_stock_");
        assert_eq!(prefix_of(&kb, "warranty"), "warranty");
        assert_eq!(prefix_of(&kb, "status_stock"), "status_");
    }

    #[test]
    fn any_k_combinations() {
        let req = SlotRequirement::any_k(3, ["a", "b", "c", "d"]);
        let combos = req.combinations();
        assert_eq!(combos.len(), 4);
        assert_eq!(combos[0], ["a", "b", "c"]);
        assert_eq!(SlotRequirement::none().combinations(), vec![Vec::<String>::new()]);
        assert_eq!(SlotRequirement::one_of(["x", "y"]).combinations().len(), 2);
    }

    #[test]
    fn extra_verification_perturbation() {
        let kb = KnowledgeBase::abcd();
        let (next, changed) = kb.apply_perturbation(&KbPerturbation::extra_verification()).unwrap();
        assert_eq!(changed.len(), 22);
        assert_eq!(
            next.workflow("recover_username").unwrap().action_sequence,
            ["pull-up-account", "extra-verification", "verify-identity"]
        );
        assert_eq!(
            next.workflow("manage_dispute_bill").unwrap().action_sequence,
            [
                "pull-up-account",
                "extra-verification",
                "verify-identity",
                "membership",
                "ask-the-oracle",
                "offer-refund"
            ]
        );
        let guarded = next.action("verify-identity").unwrap();
        assert_eq!(guarded.required, ["account-uncompromised"]);
        let provider = next.action("extra-verification").unwrap();
        assert_eq!(provider.kind, RequirementKind::None);
        assert_eq!(provider.provides, ["account-uncompromised"]);
        for name in kb.workflow_names() {
            let differs = kb.workflow(name) != next.workflow(name);
            assert_eq!(differs, changed.iter().any(|c| c == name), "{name}");
        }

        // the provider now exists, so the same perturbation cannot be applied twice
        assert!(matches!(
            next.apply_perturbation(&KbPerturbation::extra_verification()),
            Err(KbError::InvalidPerturbation(_))
        ));
    }

    #[test]
    fn perturbing_an_unused_action_changes_nothing() {
        let doc = tiny(
            r#"{"w": ["a"]}"#,
            r#"{"a": {"kind": "NONE"}, "b": {"kind": "ONE_OF", "slots": ["s"]}}"#,
        );
        let kb = KnowledgeBase::from_json_str(&doc).unwrap();
        let p = KbPerturbation {
            new_slot: "t".into(),
            guarded_action: "b".into(),
            provider_action: "c".into(),
        };
        let (next, changed) = kb.apply_perturbation(&p).unwrap();
        assert!(changed.is_empty());
        assert_eq!(next.workflow("w"), kb.workflow("w"));
    }

    #[test]
    fn perturbation_needs_existing_guarded_action() {
        let kb = KnowledgeBase::abcd();
        let p = KbPerturbation {
            new_slot: "x".into(),
            guarded_action: "nope".into(),
            provider_action: "y".into(),
        };
        assert!(matches!(kb.apply_perturbation(&p), Err(KbError::InvalidPerturbation(_))));
    }

    #[test]
    fn json_round_trip_is_identity() {
        let kb = KnowledgeBase::abcd();
        let again = KnowledgeBase::from_json_str(&kb.to_json_string()).unwrap();
        assert_eq!(kb, again);
        let (perturbed, _) = kb.apply_perturbation(&KbPerturbation::extra_verification()).unwrap();
        assert_eq!(KnowledgeBase::from_json_str(&perturbed.to_json_string()).unwrap(), perturbed);
    }
}
