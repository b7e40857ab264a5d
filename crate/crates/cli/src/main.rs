use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use pursuit_core::cache::{build_tables, policy_path, solve_cached};
use pursuit_core::harness::{load_task, run_batch, run_episode, BatchConfig, HarnessError};
use pursuit_core::planning::{PlanningConfig, StateGraph};
use pursuit_core::{AgentKind, AgentParams, HumanParams, HumanVariant, PlanError, TaskSpec};

/// Collaborative pursuit-evasion planner and experiment runner.
///
/// Task arguments are task-file paths or `builtin:<name>` for a bundled
/// fixture (a1, a2, a3, b1, b2, dummy1, dummy2, b_near, toy_*).
#[derive(Parser)]
#[command(name = "pursuit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Model {
    /// Human rationality.
    #[arg(long, default_value_t = 1.0)]
    beta1: f64,
    /// Rationality the human attributes to the agent.
    #[arg(long, default_value_t = 5.0)]
    beta2: f64,
    /// Override the task's horizon.
    #[arg(long)]
    horizon: Option<u32>,
    /// Abort when the reachable state space grows past this many states.
    #[arg(long, default_value_t = pursuit_core::planning::DEFAULT_STATE_CAP)]
    state_cap: usize,
    /// Directory for cached value tables and policies.
    #[arg(long, default_value = ".pursuit-cache")]
    cache_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a task file.
    Validate { task: String },
    /// Build and cache the policy of one agent type.
    Solve {
        task: String,
        #[arg(long)]
        agent: AgentKind,
        #[command(flatten)]
        model: Model,
    },
    /// Play one episode against a simulated human and print its log as JSON.
    Run {
        task: String,
        #[arg(long)]
        agent: AgentKind,
        #[arg(long, default_value = "tom")]
        human: HumanVariant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Starting target id for the stubborn human; drawn when absent.
        #[arg(long)]
        target: Option<u8>,
        #[command(flatten)]
        model: Model,
    },
    /// Run a batch experiment and write the metrics CSV.
    Batch {
        /// JSON batch config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write every episode log, one JSON object per line.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Solver(String),
    Other(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let msg = e.to_string();
        match e {
            HarnessError::Read { .. }
            | HarnessError::Task { .. }
            | HarnessError::UnknownBuiltin(_)
            | HarnessError::Config(_) => Failure::Validation(msg),
            HarnessError::Plan { .. } | HarnessError::Episode { .. } => Failure::Solver(msg),
            HarnessError::Io(_) | HarnessError::Csv(_) => Failure::Other(msg),
        }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Failure::Solver(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(reference: &str, horizon: Option<u32>) -> Result<(String, TaskSpec), Failure> {
    let (id, mut task) = load_task(reference)?;
    if let Some(h) = horizon {
        if h == 0 {
            return Err(Failure::Validation("horizon must be positive".into()));
        }
        task.horizon = h;
    }
    Ok((id, task))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Other(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn validate(reference: &str) -> Result<(), Failure> {
    let (id, task) = load(reference, None)?;
    print_json(&json!({
        "id": id,
        "name": task.name,
        "taskType": task.task_type.to_string(),
        "rows": task.grid.rows(),
        "cols": task.grid.cols(),
        "horizon": task.horizon,
        "evaders": task.theta_space().iter().map(|t| t.0).collect::<Vec<_>>(),
        "hasAgent": task.agent_start.is_some(),
        "contentHash": task.content_hash(),
    }))
}

fn agent_params(model: &Model) -> Result<AgentParams, Failure> {
    if model.beta1 < 0.0 || model.beta2 < 0.0 {
        return Err(Failure::Validation(
            "rationality parameters must be non-negative".into(),
        ));
    }
    Ok(AgentParams {
        beta1: model.beta1,
        beta2: model.beta2,
        ..AgentParams::default()
    })
}

fn solve(reference: &str, kind: AgentKind, model: &Model) -> Result<(), Failure> {
    let params = agent_params(model)?;
    let (id, task) = load(reference, model.horizon)?;
    let cfg = PlanningConfig {
        state_cap: model.state_cap,
        ..PlanningConfig::for_task(&task)
    };
    let tables = build_tables(task, cfg, &model.cache_dir)?;
    let policy = solve_cached(&tables, kind, &params, &model.cache_dir)?;
    let root = StateGraph::ROOT;
    print_json(&json!({
        "task": id,
        "agent": kind,
        "states": tables.graph.len(),
        "bestTarget": tables.best_target().0,
        "rootValues": tables.values.iter().map(|v| v.v[root]).collect::<Vec<_>>(),
        "rootValue": policy.value(root, &policy.initial_belief())?,
        "meta": policy.meta,
        "policyFile": policy_path(&model.cache_dir, tables.task(), kind, &params),
    }))
}

fn run(
    reference: &str,
    kind: AgentKind,
    variant: HumanVariant,
    seed: u64,
    target: Option<u8>,
    model: &Model,
) -> Result<(), Failure> {
    let params = agent_params(model)?;
    let (id, task) = load(reference, model.horizon)?;
    let initial = match target {
        Some(t) => Some(
            task.theta_space()
                .iter()
                .position(|x| x.0 == t)
                .ok_or_else(|| Failure::Validation(format!("task has no target {t}")))?,
        ),
        None => None,
    };
    let cfg = PlanningConfig {
        state_cap: model.state_cap,
        ..PlanningConfig::for_task(&task)
    };
    let tables = build_tables(task, cfg, &model.cache_dir)?;
    let policy = solve_cached(&tables, kind, &params, &model.cache_dir)?;
    let human = HumanParams {
        beta1: model.beta1,
        beta2: model.beta2,
        variant,
    };
    let log = run_episode(&tables, &policy, &id, human, seed, initial)?;
    print_json(&log)
}

fn batch(config: &PathBuf, out: &PathBuf, logs: Option<&PathBuf>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::Validation(format!("reading {}: {e}", config.display())))?;
    let cfg: BatchConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Validation(format!("{}: {e}", config.display())))?;
    let tasks = cfg.load_tasks()?;
    let result = run_batch(&cfg, &tasks)?;
    result.write_csv(BufWriter::new(File::create(out)?))?;
    if let Some(path) = logs {
        let mut w = BufWriter::new(File::create(path)?);
        for log in &result.logs {
            serde_json::to_writer(&mut w, log).map_err(|e| Failure::Other(e.to_string()))?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    for row in result.rows.iter().filter(|r| r.task_id == "all") {
        eprintln!(
            "{:<10} best {:.3} [{:.3}, {:.3}] over {} episodes",
            row.agent_type, row.best_capture_rate, row.ci_low, row.ci_high, row.n
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { task } => validate(task),
        Command::Solve { task, agent, model } => solve(task, *agent, model),
        Command::Run {
            task,
            agent,
            human,
            seed,
            target,
            model,
        } => run(task, *agent, *human, *seed, *target, model),
        Command::Batch { config, out, logs } => batch(config, out, logs.as_ref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
