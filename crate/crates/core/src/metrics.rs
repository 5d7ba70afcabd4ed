//! Scoring of teacher-forced predictions.
//!
//! Fractions are `Option<f64>`: `None` marks a metric whose denominator is
//! empty (not applicable), which is different from a score of zero.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dialogue::{ActionCall, Dialogue, Partition, SplitSpec};
use crate::kb::{prefix_of, KnowledgeBase};
use crate::parse::{parse_prediction, ExpectedKind, ParsedPrediction, PredictionKind};
use crate::prompt::PromptConfig;

pub const BLANK: &str = "<blank>";
pub const OTHER: &str = "<other>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GoldTarget {
    Action(ActionCall),
    Utterance { text: String },
}

/// One predicted turn together with its gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    /// Position among the dialogue's prediction turns, starting at 0.
    pub ordinal: usize,
    pub expected_kind: ExpectedKind,
    pub gold_flow: String,
    pub gold: GoldTarget,
    pub raw_output: String,
    pub predicted: ParsedPrediction,
}

impl PredictionRecord {
    pub fn gold_action(&self) -> Option<&ActionCall> {
        match &self.gold {
            GoldTarget::Action(call) => Some(call),
            GoldTarget::Utterance { .. } => None,
        }
    }

    pub fn predicted_action(&self) -> Option<&str> {
        match self.predicted.kind {
            PredictionKind::Action => self.predicted.action_name.as_deref(),
            _ => None,
        }
    }

    /// Predicted flow, with an empty capture treated as absent.
    pub fn predicted_flow(&self) -> Option<&str> {
        self.predicted.flow.as_deref().filter(|f| !f.is_empty())
    }

    /// Action named by the raw output on any kind of turn. Utterance turns
    /// are parsed leniently so an action emitted in place of an utterance
    /// still counts.
    pub fn emitted_action(&self) -> Option<String> {
        if let Some(a) = self.predicted_action() {
            return Some(a.to_string());
        }
        parse_prediction(&self.raw_output, ExpectedKind::Action, &PromptConfig::BASE).action_name
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Exact action-name match over gold action turns. Malformed outputs score 0.
pub fn action_accuracy(records: &[PredictionRecord]) -> Option<f64> {
    mean(records.iter().filter_map(|r| {
        let gold = r.gold_action()?;
        Some(indicator(r.predicted_action() == Some(gold.name.as_str())))
    }))
}

/// Exact flow match over every prediction turn.
pub fn flow_accuracy(records: &[PredictionRecord]) -> Option<f64> {
    mean(records.iter().map(|r| indicator(r.predicted_flow() == Some(r.gold_flow.as_str()))))
}

pub fn flow_prefix_accuracy(records: &[PredictionRecord], kb: &KnowledgeBase) -> Option<f64> {
    mean(records.iter().map(|r| indicator(prefix_matches(r, kb))))
}

fn prefix_matches(r: &PredictionRecord, kb: &KnowledgeBase) -> bool {
    r.predicted_flow().is_some_and(|p| prefix_of(kb, p) == prefix_of(kb, &r.gold_flow))
}

/// Minimum cost of editing `predicted` into `gold`: inserting or
/// substituting an element costs 1, deleting costs 1 or nothing.
pub fn levenshtein_actions<T: PartialEq>(predicted: &[T], gold: &[T], free_deletion: bool) -> usize {
    let del = usize::from(!free_deletion);
    let mut prev: Vec<usize> = (0..=gold.len()).collect();
    for (i, p) in predicted.iter().enumerate() {
        let mut row = vec![(i + 1) * del; gold.len() + 1];
        for (j, g) in gold.iter().enumerate() {
            row[j + 1] = (prev[j + 1] + del).min(row[j] + 1).min(prev[j] + usize::from(p != g));
        }
        prev = row;
    }
    prev[gold.len()]
}

/// Records grouped by dialogue in first-appearance order, each group sorted
/// by turn index.
pub fn group_by_dialogue(records: &[PredictionRecord]) -> IndexMap<&str, Vec<&PredictionRecord>> {
    let mut groups: IndexMap<&str, Vec<&PredictionRecord>> = IndexMap::new();
    for r in records {
        groups.entry(&r.dialogue_id).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|r| r.turn_index);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevenshteinSummary {
    pub mean: Option<f64>,
    pub mean_free_deletion: Option<f64>,
    pub dialogues: usize,
    /// Dialogues left out because they have no gold action turn.
    pub excluded_zero_gold: usize,
}

/// Per-dialogue edit cost between the actions emitted on all prediction
/// turns and the gold actions, averaged over dialogues.
pub fn dialogue_levenshtein(records: &[PredictionRecord]) -> LevenshteinSummary {
    let mut standard = Vec::new();
    let mut free = Vec::new();
    let mut excluded = 0;
    for group in group_by_dialogue(records).values() {
        let gold: Vec<&str> = group.iter().filter_map(|r| r.gold_action()).map(|c| c.name.as_str()).collect();
        if gold.is_empty() {
            excluded += 1;
            continue;
        }
        let predicted: Vec<String> = group.iter().filter_map(|r| r.emitted_action()).collect();
        let predicted: Vec<&str> = predicted.iter().map(String::as_str).collect();
        standard.push(levenshtein_actions(&predicted, &gold, false) as f64);
        free.push(levenshtein_actions(&predicted, &gold, true) as f64);
    }
    LevenshteinSummary {
        dialogues: standard.len(),
        mean: mean(standard),
        mean_free_deletion: mean(free),
        excluded_zero_gold: excluded,
    }
}

fn predicted_values(r: &PredictionRecord) -> &[String] {
    match r.predicted.kind {
        PredictionKind::Action => &r.predicted.slot_values,
        _ => &[],
    }
}

/// Fraction of gold positions matched by the prediction at the same
/// position. A zero-slot gold action is vacuously fully correct.
pub fn turn_slot_ordered(gold: &[String], predicted: &[String]) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let hits = gold.iter().enumerate().filter(|(i, g)| predicted.get(*i) == Some(*g)).count();
    hits as f64 / gold.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotOrdered {
    /// Mean per-turn fraction of correct positions.
    pub mean: Option<f64>,
    /// Fraction of turns with every position correct.
    pub all: Option<f64>,
}

pub fn slot_accuracy_ordered(records: &[PredictionRecord]) -> SlotOrdered {
    let scores: Vec<f64> = records
        .iter()
        .filter_map(|r| Some(turn_slot_ordered(&r.gold_action()?.values, predicted_values(r))))
        .collect();
    SlotOrdered { mean: mean(scores.iter().copied()), all: mean(scores.iter().map(|s| indicator(*s == 1.0))) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SlotDenominator {
    Expected,
    Predicted,
    Longest,
}

impl SlotDenominator {
    pub const ALL: [SlotDenominator; 3] = [SlotDenominator::Expected, SlotDenominator::Predicted, SlotDenominator::Longest];
}

/// Size of the multiset intersection of `a` and `b`.
pub fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in a {
        *counts.entry(v).or_default() += 1;
    }
    b.iter()
        .filter(|v| match counts.get_mut(v.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Order-free slot score of one turn, or `None` when the turn is left out
/// (zero-slot gold without `include_empty`) or the denominator is zero.
pub fn turn_slot_set(gold: &[String], predicted: &[String], denominator: SlotDenominator, include_empty: bool) -> Option<f64> {
    if gold.is_empty() {
        if !include_empty {
            return None;
        }
        if predicted.is_empty() {
            return Some(1.0);
        }
    }
    let denom = match denominator {
        SlotDenominator::Expected => gold.len(),
        SlotDenominator::Predicted => predicted.len(),
        SlotDenominator::Longest => gold.len().max(predicted.len()),
    };
    (denom > 0).then(|| multiset_overlap(gold, predicted) as f64 / denom as f64)
}

pub fn slot_set_metrics(records: &[PredictionRecord], denominator: SlotDenominator, include_empty: bool) -> Option<f64> {
    mean(records.iter().filter_map(|r| {
        turn_slot_set(&r.gold_action()?.values, predicted_values(r), denominator, include_empty)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSetScore {
    pub denominator: SlotDenominator,
    pub include_empty: bool,
    pub value: Option<f64>,
}

/// Counts of gold label (rows) against predicted label (columns). Columns
/// are the vocabulary, any gold label outside it, then `<blank>` for a
/// missing prediction and `<other>` for labels nobody declared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn build<'a>(pairs: impl IntoIterator<Item = (&'a str, Option<&'a str>)>, vocabulary: &[&str]) -> Self {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let gold_labels: BTreeSet<&str> = pairs.iter().map(|(g, _)| *g).collect();
        let vocab_set: HashSet<&str> = vocabulary.iter().copied().collect();
        let mut rows: Vec<&str> = vocabulary.iter().copied().filter(|v| gold_labels.contains(v)).collect();
        rows.extend(gold_labels.iter().copied().filter(|g| !vocab_set.contains(g)));

        let mut columns: Vec<&str> = vocabulary.to_vec();
        columns.extend(gold_labels.iter().copied().filter(|g| !vocab_set.contains(g)));
        columns.push(BLANK);
        columns.push(OTHER);

        let row_index: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let col_index: HashMap<&str, usize> = columns[..columns.len() - 2].iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let (blank, other) = (columns.len() - 2, columns.len() - 1);
        let mut counts = vec![vec![0; columns.len()]; rows.len()];
        for (g, p) in pairs {
            let col = match p.filter(|p| !p.is_empty()) {
                None => blank,
                Some(p) => col_index.get(p).copied().unwrap_or(other),
            };
            counts[row_index[g]][col] += 1;
        }
        Self {
            rows: rows.into_iter().map(String::from).collect(),
            columns: columns.into_iter().map(String::from).collect(),
            counts,
        }
    }

    pub fn get(&self, gold: &str, predicted: &str) -> usize {
        let (Some(r), Some(c)) = (
            self.rows.iter().position(|x| x == gold),
            self.columns.iter().position(|x| x == predicted),
        ) else {
            return 0;
        };
        self.counts[r][c]
    }

    pub fn row_total(&self, gold: &str) -> usize {
        self.rows.iter().position(|x| x == gold).map_or(0, |r| self.counts[r].iter().sum())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        self.rows.iter().map(|r| self.get(r, r)).sum()
    }

    /// True when every count sits on its row's own label.
    pub fn is_diagonal(&self) -> bool {
        self.trace() == self.total()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }
}

/// Gold action against predicted action over gold action turns.
pub fn action_confusion(records: &[PredictionRecord], kb: &KnowledgeBase) -> ConfusionMatrix {
    let vocabulary: Vec<&str> = kb.action_names().collect();
    let pairs = records.iter().filter_map(|r| Some((r.gold_action()?.name.as_str(), r.predicted_action())));
    ConfusionMatrix::build(pairs, &vocabulary)
}

/// Gold flow against predicted flow over all prediction turns.
pub fn flow_confusion(records: &[PredictionRecord], kb: &KnowledgeBase) -> ConfusionMatrix {
    let vocabulary: Vec<&str> = kb.workflow_names().collect();
    let pairs = records.iter().map(|r| (r.gold_flow.as_str(), r.predicted_flow()));
    ConfusionMatrix::build(pairs, &vocabulary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTurnAccuracy {
    pub ordinal: usize,
    pub turns: usize,
    pub flow_accuracy: f64,
    pub flow_prefix_accuracy: f64,
}

/// Flow accuracy grouped by the ordinal of the prediction turn.
pub fn per_turn_flow_accuracy(records: &[PredictionRecord], kb: &KnowledgeBase) -> Vec<PerTurnAccuracy> {
    let mut by_ordinal: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let e = by_ordinal.entry(r.ordinal).or_default();
        e.0 += 1;
        e.1 += usize::from(r.predicted_flow() == Some(r.gold_flow.as_str()));
        e.2 += usize::from(prefix_matches(r, kb));
    }
    by_ordinal
        .into_iter()
        .map(|(ordinal, (n, flow, prefix))| PerTurnAccuracy {
            ordinal,
            turns: n,
            flow_accuracy: flow as f64 / n as f64,
            flow_prefix_accuracy: prefix as f64 / n as f64,
        })
        .collect()
}

/// Where predicted flow names come from, in percent of turns with a
/// predicted flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSourceBreakdown {
    pub train: f64,
    pub test_only: f64,
    pub neither: f64,
    pub counted: usize,
}

pub fn flow_source_breakdown(records: &[PredictionRecord], split: &SplitSpec) -> Option<FlowSourceBreakdown> {
    let (mut train, mut test, mut neither) = (0usize, 0usize, 0usize);
    for flow in records.iter().filter_map(PredictionRecord::predicted_flow) {
        match split.partition_of(flow) {
            Some(Partition::Train) => train += 1,
            Some(Partition::Test) => test += 1,
            None => neither += 1,
        }
    }
    let n = train + test + neither;
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    (n > 0).then(|| FlowSourceBreakdown { train: pct(train), test_only: pct(test), neither: pct(neither), counted: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exposure {
    /// The action is in some TRAIN workflow's prescribed sequence.
    pub theoretically_seen: bool,
    /// The action occurs in some training dialogue's gold action turns.
    pub actually_seen: bool,
}

pub fn action_exposure(action: &str, split: &SplitSpec, kb: &KnowledgeBase, training: &[&Dialogue]) -> Exposure {
    Exposure {
        theoretically_seen: split
            .flows_in(Partition::Train)
            .filter_map(|f| kb.workflow(f))
            .any(|w| w.action_sequence.iter().any(|a| a == action)),
        actually_seen: training.iter().any(|d| d.actions().any(|c| c.name == action)),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExposureBucket {
    pub turns: usize,
    pub accuracy: Option<f64>,
    /// Distinct gold actions in the bucket.
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExposureBreakdown {
    pub theoretical_seen: ExposureBucket,
    pub theoretical_unseen: ExposureBucket,
    pub actual_seen: ExposureBucket,
    pub actual_unseen: ExposureBucket,
}

/// Action accuracy split by whether the gold action could have been, and
/// was, observed in training.
pub fn action_exposure_breakdown(
    records: &[PredictionRecord],
    split: &SplitSpec,
    kb: &KnowledgeBase,
    training: &[&Dialogue],
) -> ExposureBreakdown {
    let mut cache: HashMap<&str, Exposure> = HashMap::new();
    let mut buckets: [(Vec<f64>, BTreeSet<&str>); 4] = Default::default();
    for r in records {
        let Some(gold) = r.gold_action() else { continue };
        let e = *cache.entry(&gold.name).or_insert_with(|| action_exposure(&gold.name, split, kb, training));
        let hit = indicator(r.predicted_action() == Some(gold.name.as_str()));
        let theoretical = if e.theoretically_seen { 0 } else { 1 };
        let actual = if e.actually_seen { 2 } else { 3 };
        for b in [theoretical, actual] {
            buckets[b].0.push(hit);
            buckets[b].1.insert(&gold.name);
        }
    }
    let [ts, tu, aseen, au] = buckets.map(|(hits, actions)| ExposureBucket {
        turns: hits.len(),
        accuracy: mean(hits),
        actions: actions.into_iter().map(String::from).collect(),
    });
    ExposureBreakdown { theoretical_seen: ts, theoretical_unseen: tu, actual_seen: aseen, actual_unseen: au }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: usize,
    pub dialogues: usize,
    pub action_turns: usize,
    pub utterance_turns: usize,
    pub malformed: usize,
    pub action_accuracy: Option<f64>,
    pub flow_accuracy: Option<f64>,
    pub flow_prefix_accuracy: Option<f64>,
    pub levenshtein: LevenshteinSummary,
    pub slot_ordered: SlotOrdered,
    pub slot_set: Vec<SlotSetScore>,
    pub action_confusion: ConfusionMatrix,
    pub flow_confusion: ConfusionMatrix,
    pub per_turn_flow: Vec<PerTurnAccuracy>,
    pub flow_sources: Option<FlowSourceBreakdown>,
    pub action_exposure: ExposureBreakdown,
}

impl MetricsReport {
    /// Every metric over `records`. `training` is the set of dialogues the
    /// agent was trained on, used only for the actual-exposure buckets.
    pub fn compute(records: &[PredictionRecord], split: &SplitSpec, kb: &KnowledgeBase, training: &[&Dialogue]) -> Self {
        let slot_set = [false, true]
            .into_iter()
            .flat_map(|include_empty| {
                SlotDenominator::ALL.into_iter().map(move |denominator| SlotSetScore {
                    denominator,
                    include_empty,
                    value: slot_set_metrics(records, denominator, include_empty),
                })
            })
            .collect();
        Self {
            records: records.len(),
            dialogues: group_by_dialogue(records).len(),
            action_turns: records.iter().filter(|r| r.expected_kind == ExpectedKind::Action).count(),
            utterance_turns: records.iter().filter(|r| r.expected_kind == ExpectedKind::Utterance).count(),
            malformed: records.iter().filter(|r| r.predicted.is_malformed()).count(),
            action_accuracy: action_accuracy(records),
            flow_accuracy: flow_accuracy(records),
            flow_prefix_accuracy: flow_prefix_accuracy(records, kb),
            levenshtein: dialogue_levenshtein(records),
            slot_ordered: slot_accuracy_ordered(records),
            slot_set,
            action_confusion: action_confusion(records, kb),
            flow_confusion: flow_confusion(records, kb),
            per_turn_flow: per_turn_flow_accuracy(records, kb),
            flow_sources: flow_source_breakdown(records, split),
            action_exposure: action_exposure_breakdown(records, split, kb, training),
        }
    }

    /// Headline numbers by name, in a fixed order.
    pub fn scalars(&self) -> IndexMap<String, Option<f64>> {
        let mut out = IndexMap::new();
        out.insert("action_accuracy".into(), self.action_accuracy);
        out.insert("flow_accuracy".into(), self.flow_accuracy);
        out.insert("flow_prefix_accuracy".into(), self.flow_prefix_accuracy);
        out.insert("lev_act".into(), self.levenshtein.mean);
        out.insert("lev_act_free_del".into(), self.levenshtein.mean_free_deletion);
        out.insert("slot_mean".into(), self.slot_ordered.mean);
        out.insert("slot_all".into(), self.slot_ordered.all);
        for s in &self.slot_set {
            let denom = match s.denominator {
                SlotDenominator::Expected => "expected",
                SlotDenominator::Predicted => "predicted",
                SlotDenominator::Longest => "longest",
            };
            let suffix = if s.include_empty { "_with_empty" } else { "" };
            out.insert(format!("slot_set_{denom}{suffix}"), s.value);
        }
        let e = &self.action_exposure;
        out.insert("action_accuracy_theoretical_seen".into(), e.theoretical_seen.accuracy);
        out.insert("action_accuracy_theoretical_unseen".into(), e.theoretical_unseen.accuracy);
        out.insert("action_accuracy_actual_seen".into(), e.actual_seen.accuracy);
        out.insert("action_accuracy_actual_unseen".into(), e.actual_unseen.accuracy);
        if let Some(f) = &self.flow_sources {
            out.insert("flow_source_train_pct".into(), Some(f.train));
            out.insert("flow_source_test_only_pct".into(), Some(f.test_only));
            out.insert("flow_source_neither_pct".into(), Some(f.neither));
        }
        out
    }

    /// Writes `summary.csv`, `per_turn_flow.csv`, `action_confusion.csv`
    /// and `flow_confusion.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), csv::Error> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record(["metric", "value"])?;
        for (name, value) in self.scalars() {
            w.write_record([name, value.map(|v| v.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("per_turn_flow.csv"))?;
        w.write_record(["ordinal", "turns", "flow_accuracy", "flow_prefix_accuracy"])?;
        for p in &self.per_turn_flow {
            w.serialize((p.ordinal, p.turns, p.flow_accuracy, p.flow_prefix_accuracy))?;
        }
        w.flush()?;

        for (name, m) in [("action_confusion.csv", &self.action_confusion), ("flow_confusion.csv", &self.flow_confusion)] {
            let mut w = csv::Writer::from_path(dir.join(name))?;
            let mut header = vec!["gold".to_string()];
            header.extend(m.columns.iter().cloned());
            w.write_record(&header)?;
            for (row, counts) in m.rows.iter().zip(&m.counts) {
                let mut record = vec![row.clone()];
                record.extend(counts.iter().map(usize::to_string));
                w.write_record(&record)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateValue {
    pub mean: Option<f64>,
    /// Runs in which the metric was defined.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub metrics: IndexMap<String, AggregateValue>,
}

/// Unweighted mean of each headline metric across runs (e.g. seeds). Runs
/// where a metric is not applicable do not count towards its mean.
pub fn aggregate_reports(reports: &[MetricsReport]) -> AggregateReport {
    let mut values: IndexMap<String, Vec<f64>> = IndexMap::new();
    for r in reports {
        for (name, v) in r.scalars() {
            let slot = values.entry(name).or_default();
            slot.extend(v);
        }
    }
    let metrics = values
        .into_iter()
        .map(|(name, vs)| (name, AggregateValue { runs: vs.len(), mean: mean(vs) }))
        .collect();
    AggregateReport { runs: reports.len(), metrics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_prediction;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn action_record(dialogue: &str, turn: usize, gold: &str, values: &[&str], output: &str) -> PredictionRecord {
        let cfg: PromptConfig = "F".parse().unwrap();
        PredictionRecord {
            dialogue_id: dialogue.into(),
            turn_index: turn,
            ordinal: turn,
            expected_kind: ExpectedKind::Action,
            gold_flow: "recover_password".into(),
            gold: GoldTarget::Action(ActionCall::new(gold, values.iter().copied())),
            raw_output: output.into(),
            predicted: parse_prediction(output, ExpectedKind::Action, &cfg),
        }
    }

    fn utterance_record(dialogue: &str, turn: usize, gold_flow: &str, output: &str) -> PredictionRecord {
        let cfg: PromptConfig = "F".parse().unwrap();
        PredictionRecord {
            dialogue_id: dialogue.into(),
            turn_index: turn,
            ordinal: turn,
            expected_kind: ExpectedKind::Utterance,
            gold_flow: gold_flow.into(),
            gold: GoldTarget::Utterance { text: "hi".into() },
            raw_output: output.into(),
            predicted: parse_prediction(output, ExpectedKind::Utterance, &cfg),
        }
    }

    #[test]
    fn action_accuracy_counts_malformed_as_wrong() {
        let recs = vec![
            action_record("d", 0, "a", &[], "flow: f; action: a: "),
            action_record("d", 1, "b", &[], "flow: f; action: b: "),
            action_record("d", 2, "c", &[], "flow: f; action: x: "),
            action_record("d", 3, "d", &[], "flow: f; agent: hello"),
        ];
        assert_eq!(action_accuracy(&recs), Some(0.5));
        assert_eq!(action_accuracy(&[]), None);
    }

    #[test]
    fn flow_and_prefix() {
        let kb = KnowledgeBase::abcd();
        let recs = vec![utterance_record("d", 0, "boots", "flow: pricing; agent: x")];
        assert_eq!((flow_accuracy(&recs), flow_prefix_accuracy(&recs, &kb)), (Some(0.0), Some(0.0)));
        let recs = vec![utterance_record("d", 0, "status_delivery_time", "flow: status_mystery_fee; agent: x")];
        assert_eq!((flow_accuracy(&recs), flow_prefix_accuracy(&recs, &kb)), (Some(0.0), Some(1.0)));
        let recs = vec![utterance_record("d", 0, "boots", "flow: boots; agent: x")];
        assert_eq!((flow_accuracy(&recs), flow_prefix_accuracy(&recs, &kb)), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn levenshtein_examples() {
        let pa = ["pull-up-account", "enter-details"];
        let ga = ["pull-up-account", "enter-details", "send-link"];
        assert_eq!(levenshtein_actions(&pa, &pa, false), 0);
        assert_eq!(levenshtein_actions(&pa, &ga, false), 1);
        assert_eq!(levenshtein_actions(&pa, &ga, true), 1);
        let pb = ["pull-up-account", "X", "enter-details"];
        assert_eq!(levenshtein_actions(&pb, &pa, false), 1);
        assert_eq!(levenshtein_actions(&pb, &pa, true), 0);
        assert_eq!(levenshtein_actions::<&str>(&[], &[], false), 0);
    }

    #[test]
    fn dialogue_levenshtein_gathers_actions_from_utterance_turns() {
        let recs = vec![
            action_record("d1", 0, "a", &[], "flow: f; action: a: "),
            utterance_record("d1", 1, "f", "flow: f; action: b: x"),
            utterance_record("d2", 0, "f", "flow: f; agent: hi"),
        ];
        let lev = dialogue_levenshtein(&recs);
        assert_eq!(lev.dialogues, 1);
        assert_eq!(lev.excluded_zero_gold, 1);
        assert_eq!(lev.mean, Some(1.0));
        assert_eq!(lev.mean_free_deletion, Some(0.0));
    }

    #[test]
    fn ordered_slots() {
        assert_eq!(turn_slot_ordered(&s(&["a", "b", "c"]), &s(&["a", "b", "c"])), 1.0);
        assert_eq!(turn_slot_ordered(&s(&["a", "b", "c"]), &s(&["c", "b", "a"])), 1.0 / 3.0);
        assert_eq!(turn_slot_ordered(&[], &[]), 1.0);
        let recs = vec![
            action_record("d", 0, "a", &["x", "y"], "flow: f; action: a: x, z"),
            action_record("d", 1, "b", &["v"], "flow: f; action: b: v"),
        ];
        let o = slot_accuracy_ordered(&recs);
        assert_eq!(o.mean, Some(0.75));
        assert_eq!(o.all, Some(0.5));
    }

    #[test]
    fn set_slots() {
        use SlotDenominator::*;
        let (g, p) = (s(&["a", "b", "c"]), s(&["c", "b", "a"]));
        assert_eq!(turn_slot_set(&g, &p, Expected, false), Some(1.0));
        let p = s(&["a", "x"]);
        assert_eq!(turn_slot_set(&g, &p, Expected, false), Some(1.0 / 3.0));
        assert_eq!(turn_slot_set(&g, &p, Predicted, false), Some(0.5));
        assert_eq!(turn_slot_set(&g, &p, Longest, false), Some(1.0 / 3.0));
        assert_eq!(turn_slot_set(&[], &[], Longest, true), Some(1.0));
        assert_eq!(turn_slot_set(&[], &[], Longest, false), None);
        assert_eq!(turn_slot_set(&g, &[], Predicted, false), None);
        assert_eq!(turn_slot_set(&[], &p, Expected, true), None);
        assert_eq!(turn_slot_set(&[], &p, Longest, true), Some(0.0));
        assert_eq!(multiset_overlap(&s(&["a", "a", "b"]), &s(&["a", "a", "a"])), 2);
    }

    #[test]
    fn confusion_columns_and_buckets() {
        let m = ConfusionMatrix::build(
            [("instructions", Some("try-again")), ("instructions", Some("try-again")), ("a", None), ("a", Some("zzz"))],
            &["a", "instructions", "try-again"],
        );
        assert_eq!(m.rows, ["a", "instructions"]);
        assert_eq!(m.columns, ["a", "instructions", "try-again", BLANK, OTHER]);
        assert_eq!(m.get("instructions", "try-again"), 2);
        assert_eq!(m.get("a", BLANK), 1);
        assert_eq!(m.get("a", OTHER), 1);
        assert_eq!(m.row_total("a"), 2);
        assert_eq!(m.total(), 4);
        assert!(!m.is_diagonal());
        assert_eq!(m.accuracy(), Some(0.0));
    }

    #[test]
    fn per_turn_series() {
        let kb = KnowledgeBase::abcd();
        let recs = vec![
            utterance_record("d", 0, "boots", "flow: pricing; agent: x"),
            utterance_record("d", 1, "boots", "flow: boots; agent: x"),
            utterance_record("d", 2, "boots", "flow: boots; agent: x"),
        ];
        let acc: Vec<f64> = per_turn_flow_accuracy(&recs, &kb).iter().map(|p| p.flow_accuracy).collect();
        assert_eq!(acc, [0.0, 1.0, 1.0]);
    }

    #[test]
    fn flow_sources() {
        let kb = KnowledgeBase::abcd();
        let split = SplitSpec::standard(&kb);
        let recs = vec![
            utterance_record("d", 0, "boots", "flow: boots; agent: x"),
            utterance_record("d", 1, "boots", "flow: manage_change_password; agent: x"),
            utterance_record("d", 2, "boots", "agent: no flow"),
        ];
        let f = flow_source_breakdown(&recs, &split).unwrap();
        assert_eq!((f.train, f.test_only, f.neither, f.counted), (50.0, 0.0, 50.0, 2));
        assert_eq!(flow_source_breakdown(&[], &split), None);
    }

    #[test]
    fn aggregate_is_a_macro_mean() {
        let kb = KnowledgeBase::abcd();
        let split = SplitSpec::standard(&kb);
        let good = vec![action_record("d", 0, "a", &[], "flow: recover_password; action: a: ")];
        let bad = vec![action_record("d", 0, "a", &[], "flow: recover_password; action: b: ")];
        let reports = [
            MetricsReport::compute(&good, &split, &kb, &[]),
            MetricsReport::compute(&bad, &split, &kb, &[]),
        ];
        let agg = aggregate_reports(&reports);
        assert_eq!(agg.runs, 2);
        assert_eq!(agg.metrics["action_accuracy"], AggregateValue { mean: Some(0.5), runs: 2 });
        assert_eq!(agg.metrics["flow_accuracy"].mean, Some(1.0));
    }
}
