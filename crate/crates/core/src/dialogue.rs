//! Dialogues, turn serialization and train/test splits over workflows.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::kb::KnowledgeBase;

static ABCD_SPLITS_JSON: &str = include_str!("../data/abcd_splits.json");

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid dialogue `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("dialogue `{id}` has flow `{flow}` which is not in the knowledge base")]
    UnknownFlow { id: String, flow: String },
    #[error("no {0} assignment satisfies the split constraints")]
    InfeasibleSplit(SplitKind),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Agent,
    Customer,
    Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: String,
    #[serde(default)]
    pub values: Vec<String>,
}

impl ActionCall {
    pub fn new<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Self { name: name.into(), values: values.into_iter().map(Into::into).collect() }
    }
}

/// One dialogue turn: an utterance by either party, or an agent action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "speaker", rename_all = "lowercase")]
pub enum Turn {
    Agent { text: String },
    Customer { text: String },
    Action(ActionCall),
}

impl Turn {
    pub fn agent(text: impl Into<String>) -> Self {
        Turn::Agent { text: text.into() }
    }

    pub fn customer(text: impl Into<String>) -> Self {
        Turn::Customer { text: text.into() }
    }

    pub fn action<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Turn::Action(ActionCall::new(name, values))
    }

    pub fn speaker(&self) -> Speaker {
        match self {
            Turn::Agent { .. } => Speaker::Agent,
            Turn::Customer { .. } => Speaker::Customer,
            Turn::Action(_) => Speaker::Action,
        }
    }

    pub fn utterance(&self) -> Option<&str> {
        match self {
            Turn::Agent { text } | Turn::Customer { text } => Some(text),
            Turn::Action(_) => None,
        }
    }

    pub fn action_call(&self) -> Option<&ActionCall> {
        match self {
            Turn::Action(call) => Some(call),
            _ => None,
        }
    }

    /// Agent and action turns are the ones a model has to predict.
    pub fn is_prediction_target(&self) -> bool {
        !matches!(self, Turn::Customer { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub flow: String,
    pub turns: Vec<Turn>,
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Number(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::Text(s) => s,
        Id::Number(n) => n.to_string(),
    })
}

impl Dialogue {
    pub fn new(id: impl Into<String>, flow: impl Into<String>, turns: Vec<Turn>) -> Self {
        Self { id: id.into(), flow: flow.into(), turns }
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        let invalid = |message: &str| DialogueError::Invalid { id: self.id.clone(), message: message.into() };
        if self.turns.is_empty() {
            return Err(invalid("dialogue has no turns"));
        }
        if self.turns.iter().filter_map(Turn::action_call).any(|c| c.name.trim().is_empty()) {
            return Err(invalid("action turn with an empty name"));
        }
        Ok(())
    }

    /// Gold actions in turn order.
    pub fn actions(&self) -> impl Iterator<Item = &ActionCall> {
        self.turns.iter().filter_map(Turn::action_call)
    }

    pub fn action_names(&self) -> Vec<&str> {
        self.actions().map(|c| c.name.as_str()).collect()
    }

    /// Names of the actions executed strictly before turn `upto`.
    pub fn actions_before(&self, upto: usize) -> Vec<&str> {
        self.turns[..upto.min(self.turns.len())]
            .iter()
            .filter_map(Turn::action_call)
            .map(|c| c.name.as_str())
            .collect()
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Dialogue>, DialogueError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line)
            .map_err(|e| DialogueError::Malformed { line: i + 1, message: e.to_string() })?;
        d.validate()?;
        out.push(d);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, dialogues: &[Dialogue]) -> Result<(), DialogueError> {
    for d in dialogues {
        serde_json::to_writer(&mut writer, d).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Every dialogue's flow must be a workflow of `kb`.
pub fn check_flows(dataset: &[Dialogue], kb: &KnowledgeBase) -> Result<(), DialogueError> {
    match dataset.iter().find(|d| kb.workflow(&d.flow).is_none()) {
        Some(d) => Err(DialogueError::UnknownFlow { id: d.id.clone(), flow: d.flow.clone() }),
        None => Ok(()),
    }
}

pub fn serialize_action(call: &ActionCall) -> String {
    format!("action: {}: {}", call.name, call.values.join(", "))
}

pub fn serialize_turn(turn: &Turn) -> String {
    match turn {
        Turn::Agent { text } => format!("agent: {text}"),
        Turn::Customer { text } => format!("customer: {text}"),
        Turn::Action(call) => serialize_action(call),
    }
}

/// Turns `[0, upto)` serialized and joined by single spaces.
pub fn serialize_history(d: &Dialogue, upto: usize) -> String {
    d.turns[..upto.min(d.turns.len())].iter().map(serialize_turn).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Standard,
    Split1,
    Split2,
    Split3,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitKind::Standard => "standard",
            SplitKind::Split1 => "split1",
            SplitKind::Split2 => "split2",
            SplitKind::Split3 => "split3",
        })
    }
}

impl std::str::FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(SplitKind::Standard),
            "split1" => Ok(SplitKind::Split1),
            "split2" => Ok(SplitKind::Split2),
            "split3" => Ok(SplitKind::Split3),
            other => Err(format!("unknown split kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub assignment: IndexMap<String, Partition>,
}

impl SplitSpec {
    /// Every workflow of `kb` assigned to TRAIN.
    pub fn standard(kb: &KnowledgeBase) -> Self {
        Self {
            kind: SplitKind::Standard,
            assignment: kb.workflow_names().map(|f| (f.to_string(), Partition::Train)).collect(),
        }
    }

    pub fn partition_of(&self, flow: &str) -> Option<Partition> {
        self.assignment.get(flow).copied()
    }

    pub fn flows_in(&self, part: Partition) -> impl Iterator<Item = &str> {
        self.assignment.iter().filter(move |(_, p)| **p == part).map(|(f, _)| f.as_str())
    }

    pub fn train_flows(&self) -> Vec<&str> {
        self.flows_in(Partition::Train).collect()
    }

    pub fn test_flows(&self) -> Vec<&str> {
        self.flows_in(Partition::Test).collect()
    }
}

/// The ABCD split membership as published, or the all-TRAIN assignment for
/// `Standard`.
pub fn canonical_split(kind: SplitKind) -> SplitSpec {
    if kind == SplitKind::Standard {
        return SplitSpec::standard(&KnowledgeBase::abcd());
    }
    let mut all: HashMap<String, SplitSpec> =
        serde_json::from_str(ABCD_SPLITS_JSON).expect("embedded split table is valid");
    all.remove(&kind.to_string()).expect("embedded split table covers every kind")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum SplitViolation {
    /// A knowledge-base workflow the assignment does not cover.
    Unassigned { flow: String },
    /// An assigned flow the knowledge base does not know.
    UnknownFlow { flow: String },
    SameSequence { test: String, train: String },
    SharedPrefix { test: String, train: String, prefix: String, group: String },
}

impl fmt::Display for SplitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitViolation::Unassigned { flow } => write!(f, "{flow} is not assigned"),
            SplitViolation::UnknownFlow { flow } => write!(f, "{flow} is not a known workflow"),
            SplitViolation::SameSequence { test, train } => {
                write!(f, "{test} (test) has the same action sequence as {train} (train)")
            }
            SplitViolation::SharedPrefix { test, train, prefix, group } => write!(
                f,
                "{test} (test) shares prefix `{prefix}` with {train} (train) in group {group}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitReport {
    pub violations: Vec<SplitViolation>,
}

impl SplitReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_split(spec: &SplitSpec, kb: &KnowledgeBase) -> SplitReport {
    let mut violations = Vec::new();
    for flow in kb.workflow_names() {
        if !spec.assignment.contains_key(flow) {
            violations.push(SplitViolation::Unassigned { flow: flow.to_string() });
        }
    }
    for flow in spec.assignment.keys() {
        if kb.workflow(flow).is_none() {
            violations.push(SplitViolation::UnknownFlow { flow: flow.clone() });
        }
    }
    let known = |part| spec.flows_in(part).filter_map(|f| kb.workflow(f)).collect::<Vec<_>>();
    let (test, train) = (known(Partition::Test), known(Partition::Train));

    // split1 holds by construction: a flow maps to exactly one side
    if matches!(spec.kind, SplitKind::Split2 | SplitKind::Split3) {
        for t in &test {
            for r in &train {
                if t.action_sequence == r.action_sequence {
                    violations.push(SplitViolation::SameSequence { test: t.name.clone(), train: r.name.clone() });
                }
            }
        }
    }
    if spec.kind == SplitKind::Split3 {
        for t in &test {
            for r in &train {
                let group = kb.group_of(&t.name);
                if t.prefix == r.prefix && group == kb.group_of(&r.name) {
                    violations.push(SplitViolation::SharedPrefix {
                        test: t.name.clone(),
                        train: r.name.clone(),
                        prefix: t.prefix.clone(),
                        group: group.unwrap_or_default().to_string(),
                    });
                }
            }
        }
    }
    SplitReport { violations }
}

/// An assignment for `kind` that passes [`validate_split`].
///
/// The published ABCD assignment is returned when `kb` has exactly its
/// workflows and it validates. Otherwise workflows that must stay together
/// (identical sequences for split2; also same workflow group and prefix for
/// split3) are merged and the merged components alternate between TRAIN and
/// TEST in knowledge-base order.
pub fn make_split(dataset: &[Dialogue], kb: &KnowledgeBase, kind: SplitKind) -> Result<SplitSpec, DialogueError> {
    check_flows(dataset, kb)?;
    if kind == SplitKind::Standard {
        return Ok(SplitSpec::standard(kb));
    }
    let canonical = canonical_split(kind);
    let same_flows = canonical.assignment.len() == kb.len()
        && kb.workflow_names().all(|f| canonical.assignment.contains_key(f));
    if same_flows && validate_split(&canonical, kb).is_valid() {
        return Ok(canonical);
    }

    let flows: Vec<_> = kb.workflows().collect();
    let mut parent: Vec<usize> = (0..flows.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..flows.len() {
        for j in 0..i {
            let same_sequence = flows[i].action_sequence == flows[j].action_sequence;
            let same_prefix =
                flows[i].prefix == flows[j].prefix && kb.group_of(&flows[i].name) == kb.group_of(&flows[j].name);
            let join = match kind {
                SplitKind::Split2 => same_sequence,
                SplitKind::Split3 => same_sequence || same_prefix,
                _ => false,
            };
            if join {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    let mut component_side: BTreeMap<usize, Partition> = BTreeMap::new();
    let mut assignment = IndexMap::new();
    for (i, spec) in flows.iter().enumerate() {
        let root = find(&mut parent, i);
        let next = if component_side.len() % 2 == 0 { Partition::Train } else { Partition::Test };
        let side = *component_side.entry(root).or_insert(next);
        assignment.insert(spec.name.clone(), side);
    }
    if component_side.len() < 2 {
        return Err(DialogueError::InfeasibleSplit(kind));
    }
    Ok(SplitSpec { kind, assignment })
}

/// Splits dialogues into (train, test).
///
/// For the generalization splits a dialogue follows its flow's side. The
/// standard split keeps every flow on both sides: within each flow, every
/// ninth dialogue starting from the second goes to test.
pub fn partition_dataset<'a>(dataset: &'a [Dialogue], spec: &SplitSpec) -> (Vec<&'a Dialogue>, Vec<&'a Dialogue>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut seen_per_flow: HashMap<&str, usize> = HashMap::new();
    for d in dataset {
        let to_test = match spec.kind {
            SplitKind::Standard => {
                let n = seen_per_flow.entry(&d.flow).or_default();
                *n += 1;
                (*n - 1) % 9 == 1
            }
            _ => spec.partition_of(&d.flow) == Some(Partition::Test),
        };
        if to_test {
            test.push(d);
        } else {
            train.push(d);
        }
    }
    (train, test)
}

/// A test dialogue whose observed gold action sequence also occurs in a
/// training dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedOverlap {
    pub test_dialogue: String,
    pub train_dialogue: String,
    pub actions: Vec<String>,
}

/// Report-only check of the split2 condition on what agents actually did
/// rather than on the knowledge-base sequences.
pub fn observed_sequence_overlaps(dataset: &[Dialogue], spec: &SplitSpec) -> Vec<ObservedOverlap> {
    let (train, test) = partition_dataset(dataset, spec);
    let mut first_train: HashMap<Vec<&str>, &str> = HashMap::new();
    for d in &train {
        first_train.entry(d.action_names()).or_insert(&d.id);
    }
    let mut reported = HashSet::new();
    let mut out = Vec::new();
    for d in test {
        let seq = d.action_names();
        if let Some(train_id) = first_train.get(&seq) {
            if reported.insert(&d.id) {
                out.push(ObservedOverlap {
                    test_dialogue: d.id.clone(),
                    train_dialogue: train_id.to_string(),
                    actions: seq.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn password_recovery_prefix() -> Dialogue {
        Dialogue::new(
            "6601",
            "recover_password",
            vec![
                Turn::agent("Hello, how can i help you today"),
                Turn::customer("Hi I forgot my password to my account. My name is Crystal Minh."),
                Turn::action("pull-up-account", ["crystal minh"]),
            ],
        )
    }

    #[test]
    fn turn_formats() {
        assert_eq!(
            serialize_turn(&Turn::action("pull-up-account", ["crystal minh"])),
            "action: pull-up-account: crystal minh"
        );
        assert_eq!(serialize_turn(&Turn::action("make-password", [] as [&str; 0])), "action: make-password: ");
        assert_eq!(serialize_turn(&Turn::customer("cm374950")), "customer: cm374950");
        assert_eq!(
            serialize_turn(&Turn::action("verify-identity", ["a", "b", "c"])),
            "action: verify-identity: a, b, c"
        );
    }

    #[test]
    fn history() {
        let d = password_recovery_prefix();
        assert_eq!(serialize_history(&d, 0), "");
        assert_eq!(
            serialize_history(&d, 2),
            "agent: Hello, how can i help you today customer: Hi I forgot my password to my account. My name is Crystal Minh."
        );
        assert!(serialize_history(&d, 3).ends_with("action: pull-up-account: crystal minh"));
    }

    #[test]
    fn jsonl_round_trip_and_numeric_ids() {
        let d = password_recovery_prefix();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&d)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#"{"speaker":"action","name":"pull-up-account","values":["crystal minh"]}"#));
        assert_eq!(read_jsonl(text.as_bytes()).unwrap(), [d]);

        let numeric = r#"{"id": 42, "flow": "x", "turns": [{"speaker": "agent", "text": "hi"}]}"#;
        assert_eq!(read_jsonl(numeric.as_bytes()).unwrap()[0].id, "42");
    }

    #[test]
    fn jsonl_errors() {
        let bad = "{\"id\":\"1\",\"flow\":\"x\",\"turns\":[]}\n";
        assert!(matches!(read_jsonl(bad.as_bytes()), Err(DialogueError::Invalid { .. })));
        let bad = "\n{not json}\n";
        assert!(matches!(read_jsonl(bad.as_bytes()), Err(DialogueError::Malformed { line: 2, .. })));
    }

    #[test]
    fn actions_before() {
        let d = password_recovery_prefix();
        assert!(d.actions_before(2).is_empty());
        assert_eq!(d.actions_before(3), ["pull-up-account"]);
        assert_eq!(d.actions_before(99), ["pull-up-account"]);
    }

    #[test]
    fn canonical_membership() {
        let s3 = canonical_split(SplitKind::Split3);
        assert_eq!(s3.partition_of("shopping_cart"), Some(Partition::Test));
        assert_eq!(s3.partition_of("pricing"), Some(Partition::Train));
        assert_eq!(canonical_split(SplitKind::Split1).partition_of("reset_2fa"), Some(Partition::Test));
        for kind in [SplitKind::Split1, SplitKind::Split2, SplitKind::Split3] {
            assert_eq!(canonical_split(kind).assignment.len(), 55);
        }
    }

    #[test]
    fn corrupted_split2_reports_the_pair() {
        let kb = KnowledgeBase::abcd();
        let mut spec = SplitSpec::standard(&kb);
        spec.kind = SplitKind::Split2;
        spec.assignment["bad_price_competitor"] = Partition::Test;
        let report = validate_split(&spec, &kb);
        assert_eq!(
            report.violations,
            [SplitViolation::SameSequence {
                test: "bad_price_competitor".into(),
                train: "bad_price_yesterday".into()
            }]
        );
    }

    #[test]
    fn all_train_is_vacuously_valid() {
        let kb = KnowledgeBase::abcd();
        let mut spec = SplitSpec::standard(&kb);
        for kind in [SplitKind::Standard, SplitKind::Split1, SplitKind::Split2, SplitKind::Split3] {
            spec.kind = kind;
            assert!(validate_split(&spec, &kb).is_valid());
        }
        spec.assignment.shift_remove("boots");
        spec.assignment.insert("nope".into(), Partition::Test);
        assert_eq!(
            validate_split(&spec, &kb).violations,
            [
                SplitViolation::Unassigned { flow: "boots".into() },
                SplitViolation::UnknownFlow { flow: "nope".into() }
            ]
        );
    }

    #[test]
    fn make_split_always_validates() {
        let kb = KnowledgeBase::abcd();
        for kind in [SplitKind::Standard, SplitKind::Split1, SplitKind::Split2, SplitKind::Split3] {
            let spec = make_split(&[], &kb, kind).unwrap();
            assert_eq!(spec.kind, kind);
            let report = validate_split(&spec, &kb);
            assert!(report.is_valid(), "{kind}: {:?}", report.violations);
            if kind != SplitKind::Standard {
                assert!(!spec.test_flows().is_empty() && !spec.train_flows().is_empty());
            }
        }
    }

    #[test]
    fn make_split_rejects_unknown_flows_and_degenerate_kbs() {
        let kb = KnowledgeBase::abcd();
        let d = Dialogue::new("1", "nope", vec![Turn::agent("hi")]);
        assert!(matches!(make_split(&[d], &kb, SplitKind::Split1), Err(DialogueError::UnknownFlow { .. })));

        let tiny = KnowledgeBase::from_json_str(
            r#"{"workflows": {"a_x": ["s"], "a_y": ["s"]},
                "prefix_groups": {"a_x": "a_", "a_y": "a_"},
                "actions": {"s": {"kind": "NONE"}}}"#,
        )
        .unwrap();
        assert!(make_split(&[], &tiny, SplitKind::Split1).is_ok());
        assert!(matches!(make_split(&[], &tiny, SplitKind::Split2), Err(DialogueError::InfeasibleSplit(_))));
    }

    #[test]
    fn partitions() {
        let kb = KnowledgeBase::abcd();
        let data: Vec<Dialogue> = (0..10)
            .map(|i| Dialogue::new(i.to_string(), if i < 5 { "reset_2fa" } else { "boots" }, vec![Turn::agent("x")]))
            .collect();
        let (train, test) = partition_dataset(&data, &canonical_split(SplitKind::Split1));
        assert_eq!(train.len() + test.len(), 10);
        assert!(test.iter().all(|d| d.flow == "reset_2fa"));
        let (_, test) = partition_dataset(&data, &SplitSpec::standard(&kb));
        let ids: Vec<&str> = test.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["1", "6"]);
    }

    #[test]
    fn observed_overlaps() {
        let spec = canonical_split(SplitKind::Split1);
        let a = Dialogue::new("a", "recover_username", vec![Turn::action("pull-up-account", ["x"])]);
        let b = Dialogue::new("b", "reset_2fa", vec![Turn::action("pull-up-account", ["y"])]);
        let c = Dialogue::new("c", "reset_2fa", vec![Turn::action("send-link", ["y"])]);
        let overlaps = observed_sequence_overlaps(&[a, b, c], &spec);
        assert_eq!(overlaps.len(), 1);
        assert_eq!((overlaps[0].test_dialogue.as_str(), overlaps[0].train_dialogue.as_str()), ("b", "a"));
    }
}
