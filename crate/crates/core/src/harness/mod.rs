//! Teacher-forced prediction runs and their scoring.
//!
//! Every agent or action turn of a dialogue is predicted from the gold
//! history; the agent's earlier outputs never enter a later context.

mod agents;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{latest_customer_value, Agent, AgentClient, AgentError, AgentKind, AgentRequest, OracleAgent, PlanFollower};
pub use remote::{RemoteAgent, DEFAULT_TIMEOUT};

use crate::dialogue::{Dialogue, Partition, SplitSpec, Turn};
use crate::kb::KnowledgeBase;
use crate::metrics::{GoldTarget, MetricsReport, PredictionRecord};
use crate::parse::{parse_prediction, ExpectedKind};
use crate::planner::PlanMode;
use crate::prompt::{build_target, gold_context, PromptConfig, PromptError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dialogue `{dialogue}` turn {turn}: {source}")]
    Agent { dialogue: String, turn: usize, source: AgentError },
    #[error("dialogue `{dialogue}`: {source}")]
    Prompt { dialogue: String, source: PromptError },
    #[error("dialogue `{dialogue}` has flow `{flow}` which is not in the knowledge base")]
    UnknownFlow { dialogue: String, flow: String },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub prompt: PromptConfig,
    pub split: SplitSpec,
    pub plan_mode: PlanMode,
    /// Legal flows shown for dialogues of TRAIN flows.
    pub train_legal_flows: Vec<String>,
    /// Legal flows shown for dialogues of TEST flows.
    pub test_legal_flows: Vec<String>,
    pub concurrency: usize,
}

impl RunConfig {
    /// TRAIN flows for train-side dialogues, every workflow for test-side
    /// ones. Slot plans switch the planner to `Replan`.
    pub fn new(prompt: PromptConfig, split: SplitSpec, kb: &KnowledgeBase) -> Self {
        let train_legal_flows = split.train_flows().into_iter().map(String::from).collect();
        let test_legal_flows = kb.workflow_names().map(String::from).collect();
        let plan_mode = if prompt.include_plan_slots { PlanMode::Replan } else { PlanMode::Lookup };
        Self { prompt, split, plan_mode, train_legal_flows, test_legal_flows, concurrency: 1 }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.prompt.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.prompt.include_plan_slots && self.plan_mode == PlanMode::Lookup {
            return Err(HarnessError::Config("slot plans need the REPLAN plan mode".into()));
        }
        if self.concurrency == 0 {
            return Err(HarnessError::Config("concurrency must be at least 1".into()));
        }
        Ok(())
    }

    pub fn legal_flows_for(&self, flow: &str) -> &[String] {
        match self.split.partition_of(flow) {
            Some(Partition::Test) => &self.test_legal_flows,
            _ => &self.train_legal_flows,
        }
    }
}

/// A context/target pair for one prediction turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub id: String,
    pub turn: usize,
    pub context: String,
    pub target: String,
}

/// Gold contexts and targets for every prediction turn of `d`.
pub fn dialogue_contexts(d: &Dialogue, cfg: &RunConfig, kb: &KnowledgeBase) -> Result<Vec<ContextRecord>, HarnessError> {
    if kb.workflow(&d.flow).is_none() {
        return Err(HarnessError::UnknownFlow { dialogue: d.id.clone(), flow: d.flow.clone() });
    }
    let prompt_err = |source| HarnessError::Prompt { dialogue: d.id.clone(), source };
    let legal = cfg.legal_flows_for(&d.flow);
    let mut out = Vec::new();
    for (k, turn) in d.turns.iter().enumerate() {
        if !turn.is_prediction_target() {
            continue;
        }
        let context = gold_context(kb, d, k, &cfg.prompt, legal, cfg.plan_mode).map_err(prompt_err)?;
        let target = build_target(turn, &d.flow).map_err(prompt_err)?;
        out.push(ContextRecord { id: d.id.clone(), turn: k, context: context.text, target });
    }
    Ok(out)
}

/// Queries `agent` once per agent or action turn of `d`, always from the
/// gold context, and parses each answer.
pub fn predict_dialogue(
    agent: &dyn Agent,
    d: &Dialogue,
    cfg: &RunConfig,
    kb: &KnowledgeBase,
) -> Result<Vec<PredictionRecord>, HarnessError> {
    let contexts = dialogue_contexts(d, cfg, kb)?;
    let mut records = Vec::with_capacity(contexts.len());
    for (ordinal, ctx) in contexts.into_iter().enumerate() {
        let turn = &d.turns[ctx.turn];
        let expected_kind = ExpectedKind::of(turn).expect("prediction turns are agent or action turns");
        let request = AgentRequest { context: &ctx.context, expected_kind, gold_target: &ctx.target };
        let raw_output = agent
            .respond(&request)
            .map_err(|source| HarnessError::Agent { dialogue: d.id.clone(), turn: ctx.turn, source })?;
        let gold = match turn {
            Turn::Action(call) => GoldTarget::Action(call.clone()),
            Turn::Agent { text } => GoldTarget::Utterance { text: text.clone() },
            Turn::Customer { .. } => unreachable!("customer turns are skipped"),
        };
        records.push(PredictionRecord {
            dialogue_id: d.id.clone(),
            turn_index: ctx.turn,
            ordinal,
            expected_kind,
            gold_flow: d.flow.clone(),
            gold,
            predicted: parse_prediction(&raw_output, expected_kind, &cfg.prompt),
            raw_output,
        });
    }
    Ok(records)
}

/// [`predict_dialogue`] over many dialogues on up to `cfg.concurrency`
/// threads. Records come back in dataset order.
pub fn predict_dataset(
    agent: &dyn Agent,
    dialogues: &[&Dialogue],
    cfg: &RunConfig,
    kb: &KnowledgeBase,
) -> Result<Vec<PredictionRecord>, HarnessError> {
    use rayon::prelude::*;

    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let per_dialogue: Vec<Vec<PredictionRecord>> =
        pool.install(|| dialogues.par_iter().map(|d| predict_dialogue(agent, d, cfg, kb)).collect::<Result<_, _>>())?;
    Ok(per_dialogue.into_iter().flatten().collect())
}

/// Full metric report for a run. `training` feeds the actual-exposure buckets.
pub fn score_run(records: &[PredictionRecord], split: &SplitSpec, kb: &KnowledgeBase, training: &[&Dialogue]) -> MetricsReport {
    MetricsReport::compute(records, split, kb, training)
}
