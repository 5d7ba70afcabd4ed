use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use flowplan::dialogue::{self, Dialogue, SplitKind, SplitSpec};
use flowplan::fixtures;
use flowplan::harness::{self, AgentClient, AgentKind, RunConfig};
use flowplan::kb::{KbPerturbation, KnowledgeBase};
use flowplan::metrics::{aggregate_reports, MetricsReport, PredictionRecord};
use flowplan::planner::{self, GroundingInput, PlanMode};
use flowplan::prompt::PromptConfig;

/// Marks errors caused by invalid input rather than by the run itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "flowplan", version, about = "Workflow planning and evaluation for task-oriented dialogue")]
struct Cli {
    /// Knowledge base JSON. Defaults to the embedded ABCD workflows.
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Summarise the knowledge base or write it out as JSON.
    Kb {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add a slot-providing action in front of every use of a guarded action.
    Perturb {
        #[arg(long, default_value = "account-uncompromised")]
        new_slot: String,
        #[arg(long, default_value = "verify-identity")]
        guarded: String,
        #[arg(long, default_value = "extra-verification")]
        provider: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a workflow and print the operator plan and its action list.
    Plan {
        #[arg(long)]
        flow: String,
        /// Slots already known, comma separated.
        #[arg(long, value_delimiter = ',')]
        slots: Vec<String>,
        /// Actions already executed, comma separated; prints the remaining plan.
        #[arg(long, value_delimiter = ',')]
        executed: Vec<String>,
        /// Re-plan from the executed actions instead of using the lookup table.
        #[arg(long)]
        replan: bool,
        /// Interleave slot requests with the actions (needs --replan).
        #[arg(long)]
        include_slots: bool,
        /// Write `<flow>-domain.pddl` and `<flow>-problem.pddl` into this directory.
        #[arg(long)]
        emit_pddl: Option<PathBuf>,
    },
    /// Produce a train/test assignment of workflows.
    Split {
        #[arg(long)]
        kind: SplitKind,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a split assignment; exits with status 2 on any violation.
    ValidateSplit {
        #[arg(long)]
        split: String,
        /// Dialogues for the report-only observed-sequence check.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write gold contexts and targets for every prediction turn.
    BuildContexts {
        #[arg(long, default_value = "LFP")]
        config: PromptConfig,
        #[arg(long)]
        split: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        partition: Side,
        #[arg(long)]
        replan: bool,
    },
    /// Run an agent over a dataset with teacher forcing.
    Predict {
        #[arg(long, default_value = "oracle")]
        agent: AgentKind,
        #[arg(long, env = "FLOWPLAN_ENDPOINT")]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
        #[arg(long, default_value = "LFP")]
        config: PromptConfig,
        #[arg(long)]
        split: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        partition: Side,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[arg(long)]
        replan: bool,
    },
    /// Score a predictions file.
    Score {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        split: String,
        /// Dataset the split was taken from; its train side decides which
        /// actions were actually seen in training.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write CSV tables into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Average the headline metrics of several reports (e.g. one per seed).
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the built-in fixture dialogues as JSON lines.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase> {
    match path {
        None => Ok(KnowledgeBase::abcd()),
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            KnowledgeBase::from_reader(file).map_err(|e| invalid(format!("{}: {e}", p.display())))
        }
    }
}

fn load_data(path: &Path, kb: &KnowledgeBase) -> Result<Vec<Dialogue>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let data = dialogue::read_jsonl(BufReader::new(file)).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    dialogue::check_flows(&data, kb).map_err(|e| invalid(e.to_string()))?;
    Ok(data)
}

/// A split file, or a split kind name resolved with `make_split`.
fn load_split(arg: &str, kb: &KnowledgeBase) -> Result<SplitSpec> {
    let path = Path::new(arg);
    let spec = if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{arg}: {e}")))?
    } else if let Ok(kind) = arg.parse::<SplitKind>() {
        dialogue::make_split(&[], kb, kind).map_err(|e| invalid(e.to_string()))?
    } else {
        bail!(invalid(format!("`{arg}` is neither a split file nor a split kind")));
    };
    let report = dialogue::validate_split(&spec, kb);
    if !report.is_valid() {
        for v in &report.violations {
            eprintln!("split violation: {v}");
        }
        bail!(invalid(format!("split `{arg}` has {} violation(s)", report.violations.len())));
    }
    Ok(spec)
}

fn select<'a>(data: &'a [Dialogue], split: &SplitSpec, side: Side) -> Vec<&'a Dialogue> {
    let (train, test) = dialogue::partition_dataset(data, split);
    match side {
        Side::Train => train,
        Side::Test => test,
        Side::All => data.iter().collect(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => writeln!(create(p)?, "{text}")?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let kb = load_kb(cli.kb.as_deref())?;
    match cli.command {
        Command::Kb { out } => match out {
            Some(p) => writeln!(create(&p)?, "{}", kb.to_json_string())?,
            None => {
                println!("workflows: {}", kb.len());
                println!("actions: {}", kb.action_names().count());
                for spec in kb.workflows() {
                    println!("{}\t{}\t{}", spec.name, spec.prefix, spec.action_sequence.join(", "));
                }
            }
        },
        Command::Perturb { new_slot, guarded, provider, out } => {
            let p = KbPerturbation { new_slot, guarded_action: guarded, provider_action: provider };
            let (next, changed) = kb.apply_perturbation(&p).map_err(|e| invalid(e.to_string()))?;
            println!("changed {} of {} workflows", changed.len(), kb.len());
            for flow in &changed {
                println!("{flow}\t{}", next.workflow(flow).unwrap().action_sequence.join(", "));
            }
            if let Some(p) = out {
                writeln!(create(&p)?, "{}", next.to_json_string())?;
            }
        }
        Command::Plan { flow, slots, executed, replan, include_slots, emit_pddl } => {
            if kb.workflow(&flow).is_none() {
                bail!(invalid(format!("unknown workflow `{flow}`")));
            }
            let input = GroundingInput { initial_slots: slots, executed: executed.clone() };
            let problem = planner::ground_problem_from(&kb, &flow, &input)?;
            let plan = planner::solve(&problem)?;
            print!("{plan}");
            let mode = if replan { PlanMode::Replan } else { PlanMode::Lookup };
            let stripped = if executed.is_empty() {
                planner::strip_plan(&plan, include_slots)
            } else {
                planner::remaining_plan(&kb, &flow, &executed, mode, include_slots)
                    .map_err(|e| invalid(e.to_string()))?
            };
            println!("action_plan: {stripped};");
            if let Some(dir) = emit_pddl {
                fs::create_dir_all(&dir)?;
                let (domain, problem_text) = planner::emit_pddl(&problem);
                fs::write(dir.join(format!("{flow}-domain.pddl")), domain)?;
                fs::write(dir.join(format!("{flow}-problem.pddl")), problem_text)?;
            }
        }
        Command::Split { kind, data, out } => {
            let data = match data {
                Some(p) => load_data(&p, &kb)?,
                None => Vec::new(),
            };
            let spec = dialogue::make_split(&data, &kb, kind).map_err(|e| invalid(e.to_string()))?;
            write_json(out.as_deref(), &spec)?;
        }
        Command::ValidateSplit { split, data } => {
            let text = fs::read_to_string(&split).with_context(|| format!("reading {split}"))?;
            let spec: SplitSpec = serde_json::from_str(&text).map_err(|e| invalid(format!("{split}: {e}")))?;
            let report = dialogue::validate_split(&spec, &kb);
            for v in &report.violations {
                println!("violation: {v}");
            }
            if let Some(p) = data {
                for o in dialogue::observed_sequence_overlaps(&load_data(&p, &kb)?, &spec) {
                    println!(
                        "observed: test dialogue {} repeats the actions of train dialogue {} ({})",
                        o.test_dialogue,
                        o.train_dialogue,
                        o.actions.join(", ")
                    );
                }
            }
            if !report.is_valid() {
                bail!(invalid(format!("{} violation(s)", report.violations.len())));
            }
            println!("ok: {} assignment is valid", spec.kind);
        }
        Command::BuildContexts { config, split, data, out, partition, replan } => {
            let spec = load_split(&split, &kb)?;
            let data = load_data(&data, &kb)?;
            let mut cfg = RunConfig::new(config, spec, &kb);
            if replan {
                cfg.plan_mode = PlanMode::Replan;
            }
            cfg.validate().map_err(|e| invalid(e.to_string()))?;
            let mut records = Vec::new();
            for d in select(&data, &cfg.split, partition) {
                records.extend(harness::dialogue_contexts(d, &cfg, &kb)?);
            }
            write_jsonl(&out, &records)?;
            eprintln!("wrote {} contexts to {}", records.len(), out.display());
        }
        Command::Predict {
            agent,
            endpoint,
            seed,
            timeout_secs,
            config,
            split,
            data,
            out,
            partition,
            concurrency,
            replan,
        } => {
            let spec = load_split(&split, &kb)?;
            let data = load_data(&data, &kb)?;
            let client = match agent {
                AgentKind::Remote => {
                    let Some(endpoint) = endpoint else {
                        bail!(invalid("--agent remote needs --endpoint or FLOWPLAN_ENDPOINT"));
                    };
                    AgentClient::remote(endpoint, Duration::from_secs(timeout_secs))
                }
                kind => AgentClient::new(kind, endpoint, seed)?,
            };
            let mut cfg = RunConfig::new(config, spec, &kb);
            cfg.concurrency = concurrency;
            if replan {
                cfg.plan_mode = PlanMode::Replan;
            }
            cfg.validate().map_err(|e| invalid(e.to_string()))?;
            let dialogues = select(&data, &cfg.split, partition);
            let records = harness::predict_dataset(&client, &dialogues, &cfg, &kb)?;
            write_jsonl(&out, &records)?;
            eprintln!("wrote {} predictions for {} dialogues to {}", records.len(), dialogues.len(), out.display());
        }
        Command::Score { preds, split, data, out, csv } => {
            let spec = load_split(&split, &kb)?;
            let file = File::open(&preds).with_context(|| format!("opening {}", preds.display()))?;
            let mut records: Vec<PredictionRecord> = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                records.push(
                    serde_json::from_str(&line)
                        .map_err(|e| invalid(format!("{} line {}: {e}", preds.display(), i + 1)))?,
                );
            }
            let data = match data {
                Some(p) => load_data(&p, &kb)?,
                None => Vec::new(),
            };
            let training = select(&data, &spec, Side::Train);
            let report = harness::score_run(&records, &spec, &kb, &training);
            write_json(Some(&out), &report)?;
            if let Some(dir) = csv {
                report.write_csv(&dir)?;
            }
            for (name, value) in report.scalars() {
                match value {
                    Some(v) => println!("{name}\t{v:.4}"),
                    None => println!("{name}\tn/a"),
                }
            }
        }
        Command::Aggregate { reports, out } => {
            let mut loaded: Vec<MetricsReport> = Vec::new();
            for p in &reports {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                loaded.push(serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?);
            }
            write_json(out.as_deref(), &aggregate_reports(&loaded))?;
        }
        Command::GenFixtures { out } => {
            let data = fixtures::fixture_dataset(&kb);
            dialogue::write_jsonl(create(&out)?, &data)?;
            eprintln!("wrote {} dialogues to {}", data.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
