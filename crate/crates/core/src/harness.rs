//! Seeded episodes and batch experiments with simulated humans.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{solve, AgentKind, AgentParams, AgentPolicy};
use crate::episode::{Episode, EpisodeOutcome, StepRecord};
use crate::error::PlanError;
use crate::human::{HumanParams, HumanVariant, SimulatedHuman};
use crate::planning::{PlanningConfig, Tables};
use crate::error::{EnvError, TaskError};
use crate::grid::Dir;
use crate::fixtures;
use crate::task::{TaskSpec, TaskType};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("task {task}: {source}")]
    Plan {
        task: String,
        #[source]
        source: PlanError,
    },
    #[error("episode {task}/{agent}/seed {seed}: {source}")]
    Episode {
        task: String,
        agent: AgentKind,
        seed: u64,
        #[source]
        source: PlanError,
    },
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Task {
        path: String,
        #[source]
        source: TaskError,
    },
    #[error("no bundled task named {0:?}")]
    UnknownBuiltin(String),
    #[error("invalid batch config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeLog {
    pub task_id: String,
    pub agent_type: AgentKind,
    pub human_variant: HumanVariant,
    pub seed: u64,
    pub transcript: Vec<StepRecord>,
    pub outcome: EpisodeOutcome,
    pub captured_best: bool,
    pub steps: u32,
    pub warnings: Vec<String>,
}

impl EpisodeLog {
    pub fn captured_any(&self) -> bool {
        matches!(self.outcome, EpisodeOutcome::Captured { .. })
    }
}

/// Resolves a task reference: `builtin:<name>` for a bundled fixture,
/// otherwise a path to a task file. Returns the task id (the builtin name or
/// the task's own name, falling back to the file stem) and the parsed task.
pub fn load_task(reference: &str) -> Result<(String, TaskSpec), HarnessError> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        let task = fixtures::load(name).ok_or_else(|| HarnessError::UnknownBuiltin(name.into()))?;
        return Ok((name.to_string(), task));
    }
    let text = std::fs::read_to_string(reference).map_err(|source| HarnessError::Read {
        path: reference.into(),
        source,
    })?;
    let task = TaskSpec::parse(&text).map_err(|source| HarnessError::Task {
        path: reference.into(),
        source,
    })?;
    let id = if task.name.is_empty() {
        std::path::Path::new(reference)
            .file_stem()
            .map_or_else(|| reference.to_string(), |s| s.to_string_lossy().into_owned())
    } else {
        task.name.clone()
    };
    Ok((id, task))
}

/// SplitMix64 finalizer chained over the parts.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Plays one episode against a simulated human. `initial_target` pins the
/// stubborn human's target (index into the target space).
pub fn run_episode(
    tables: &Tables,
    policy: &AgentPolicy,
    task_id: &str,
    human: HumanParams,
    seed: u64,
    initial_target: Option<usize>,
) -> Result<EpisodeLog, HarnessError> {
    let wrap = |source: PlanError| HarnessError::Episode {
        task: task_id.to_string(),
        agent: policy.kind,
        seed,
        source,
    };
    let theta_star = tables.best_target_index();
    let start_target = match human.variant {
        HumanVariant::Told => Some(theta_star),
        _ => initial_target,
    };
    let mut sim = SimulatedHuman::new(human, tables.n_theta(), seed, start_target);
    let mut episode = Episode::new(tables, policy);
    let mut transcript = Vec::new();
    let mut warnings = Vec::new();
    while !episode.is_terminal() {
        let agent_action = episode.agent_choice().map_err(wrap)?;
        let step = sim.step(tables, episode.state_index(), agent_action);
        warnings.extend(step.warning);
        sim = step.human;
        let record = episode
            .advance(
                agent_action,
                step.action,
                Some(sim.target_belief.clone()),
                &mut warnings,
            )
            .map_err(wrap)?;
        transcript.push(record);
    }
    let outcome = episode.outcome().expect("terminal");
    let captured_best = outcome
        == EpisodeOutcome::Captured {
            id: tables.best_target(),
        };
    Ok(EpisodeLog {
        task_id: task_id.to_string(),
        agent_type: policy.kind,
        human_variant: human.variant,
        seed,
        steps: transcript.len() as u32,
        transcript,
        outcome,
        captured_best,
        warnings,
    })
}

/// Replays scripted human actions (as first unit moves) against the agent,
/// returning the step records a live session would have produced. Stops
/// early if the episode ends.
pub fn replay_episode(
    tables: &Tables,
    policy: &AgentPolicy,
    human_moves: &[Dir],
) -> Result<Vec<StepRecord>, PlanError> {
    let mut episode = Episode::new(tables, policy);
    let mut warnings = Vec::new();
    let mut records = Vec::new();
    for &d in human_moves {
        if episode.is_terminal() {
            break;
        }
        let h = episode
            .human_action_by_first_move(d)
            .ok_or(EnvError::IllegalAction {
                mover: "human",
                detail: format!("no legal move {d}"),
            })?;
        let a = episode.agent_choice()?;
        records.push(episode.advance(a, h, None, &mut warnings)?);
    }
    Ok(records)
}

fn default_true() -> bool {
    true
}

fn default_resamples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchConfig {
    /// Task file paths, or `builtin:<name>` for the bundled fixtures.
    pub tasks: Vec<String>,
    pub agent_types: Vec<AgentKind>,
    pub human_variant: HumanVariant,
    /// In the explicit condition the interface shows the best target, so
    /// the simulated human is the told variant.
    #[serde(default = "default_true")]
    pub explicit_tells_human: bool,
    pub n_seeds: usize,
    #[serde(default)]
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    /// Overrides every task's horizon when set.
    #[serde(default)]
    pub horizon: Option<u32>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

impl BatchConfig {
    pub fn human_params(&self, kind: AgentKind) -> HumanParams {
        let variant = if kind == AgentKind::Explicit && self.explicit_tells_human {
            HumanVariant::Told
        } else {
            self.human_variant
        };
        HumanParams {
            beta1: self.beta1,
            beta2: self.beta2,
            variant,
        }
    }

    pub fn agent_params(&self) -> AgentParams {
        AgentParams {
            beta1: self.beta1,
            beta2: self.beta2,
            ..AgentParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_seeds < 1 {
            return Err("nSeeds must be at least 1".into());
        }
        if self.tasks.is_empty() || self.agent_types.is_empty() {
            return Err("tasks and agentTypes must be non-empty".into());
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 {
            return Err("rationality parameters must be non-negative".into());
        }
        if self.horizon == Some(0) {
            return Err("horizon must be positive".into());
        }
        Ok(())
    }

    /// Validates the config and loads its tasks. Task ids must be distinct.
    pub fn load_tasks(&self) -> Result<Vec<(String, TaskSpec)>, HarnessError> {
        self.validate().map_err(HarnessError::Config)?;
        let mut out: Vec<(String, TaskSpec)> = Vec::new();
        for r in &self.tasks {
            let (id, task) = load_task(r)?;
            if out.iter().any(|(seen, _)| *seen == id) {
                return Err(HarnessError::Config(format!("duplicate task id {id:?}")));
            }
            out.push((id, task));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub task_id: String,
    pub task_type: String,
    pub agent_type: AgentKind,
    pub human_variant: HumanVariant,
    pub n: usize,
    pub best_capture_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub any_capture_rate: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Per (task, agent) in config order, followed by one pooled row per
    /// agent with task id `all`.
    pub rows: Vec<MetricsRow>,
    pub logs: Vec<EpisodeLog>,
}

impl BatchResult {
    pub fn row(&self, task_id: &str, kind: AgentKind) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.task_id == task_id && r.agent_type == kind)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "task_id",
            "task_type",
            "agent_type",
            "human_variant",
            "n",
            "best_capture_rate",
            "ci_low",
            "ci_high",
            "mean_steps",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.task_id.clone(),
                r.task_type.clone(),
                r.agent_type.to_string(),
                r.human_variant.to_string(),
                r.n.to_string(),
                format!("{:.6}", r.best_capture_rate),
                format!("{:.6}", r.ci_low),
                format!("{:.6}", r.ci_high),
                format!("{:.6}", r.mean_steps),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Percentile bootstrap 95% interval of the mean of 0/1 outcomes.
pub fn bootstrap_ci(flags: &[bool], resamples: usize, seed: u64) -> (f64, f64) {
    let n = flags.len();
    if n == 0 || resamples == 0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n).filter(|_| flags[rng.gen_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (q(0.025), q(0.975))
}

fn summarize(
    task_id: &str,
    task_type: &str,
    kind: AgentKind,
    variant: HumanVariant,
    logs: &[&EpisodeLog],
    resamples: usize,
    seed: u64,
) -> MetricsRow {
    let n = logs.len();
    let flags: Vec<bool> = logs.iter().map(|l| l.captured_best).collect();
    let best = flags.iter().filter(|f| **f).count() as f64 / n as f64;
    let any = logs.iter().filter(|l| l.captured_any()).count() as f64 / n as f64;
    let steps = logs.iter().map(|l| l.steps as f64).sum::<f64>() / n as f64;
    let (ci_low, ci_high) = bootstrap_ci(&flags, resamples, seed);
    MetricsRow {
        task_id: task_id.to_string(),
        task_type: task_type.to_string(),
        agent_type: kind,
        human_variant: variant,
        n,
        best_capture_rate: best,
        ci_low,
        ci_high,
        any_capture_rate: any,
        mean_steps: steps,
    }
}

fn kind_index(kind: AgentKind) -> u64 {
    AgentKind::ALL.iter().position(|k| *k == kind).unwrap() as u64
}

/// Solved tables and policies for one task.
pub struct PreparedTask {
    pub id: String,
    pub tables: Tables,
    pub policies: Vec<AgentPolicy>,
}

pub fn prepare(
    id: &str,
    mut task: TaskSpec,
    kinds: &[AgentKind],
    params: &AgentParams,
    horizon: Option<u32>,
) -> Result<PreparedTask, HarnessError> {
    if let Some(h) = horizon {
        task.horizon = h;
    }
    let wrap = |source| HarnessError::Plan {
        task: id.to_string(),
        source,
    };
    let cfg = PlanningConfig::for_task(&task);
    let tables = Tables::build(task, cfg).map_err(wrap)?;
    let policies = kinds
        .par_iter()
        .map(|k| solve(&tables, *k, params))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)?;
    Ok(PreparedTask {
        id: id.to_string(),
        tables,
        policies,
    })
}

/// Runs every (task, agent, replicate) cell. Output order and content do not
/// depend on the thread count.
pub fn run_batch(
    cfg: &BatchConfig,
    tasks: &[(String, TaskSpec)],
) -> Result<BatchResult, HarnessError> {
    let params = cfg.agent_params();
    let prepared = tasks
        .par_iter()
        .map(|(id, t)| prepare(id, t.clone(), &cfg.agent_types, &params, cfg.horizon))
        .collect::<Result<Vec<_>, _>>()?;
    run_prepared(cfg, &prepared)
}

pub fn run_prepared(
    cfg: &BatchConfig,
    prepared: &[PreparedTask],
) -> Result<BatchResult, HarnessError> {
    let mut jobs = Vec::new();
    for ti in 0..prepared.len() {
        for (ki, kind) in cfg.agent_types.iter().enumerate() {
            for rep in 0..cfg.n_seeds {
                jobs.push((ti, ki, *kind, rep));
            }
        }
    }
    let logs = jobs
        .par_iter()
        .map(|&(ti, ki, kind, rep)| {
            let p = &prepared[ti];
            let seed = mix_seed(&[cfg.seed, ti as u64, kind_index(kind), rep as u64]);
            run_episode(
                &p.tables,
                &p.policies[ki],
                &p.id,
                cfg.human_params(kind),
                seed,
                None,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (ti, p) in prepared.iter().enumerate() {
        for kind in &cfg.agent_types {
            let cell: Vec<&EpisodeLog> = logs
                .iter()
                .filter(|l| l.task_id == p.id && l.agent_type == *kind)
                .collect();
            rows.push(summarize(
                &p.id,
                &p.tables.task().task_type.to_string(),
                *kind,
                cfg.human_params(*kind).variant,
                &cell,
                cfg.bootstrap_resamples,
                mix_seed(&[cfg.seed, ti as u64, kind_index(*kind), u64::MAX]),
            ));
        }
    }
    for kind in &cfg.agent_types {
        let pooled: Vec<&EpisodeLog> = logs.iter().filter(|l| l.agent_type == *kind).collect();
        rows.push(summarize(
            "all",
            "all",
            *kind,
            cfg.human_params(*kind).variant,
            &pooled,
            cfg.bootstrap_resamples,
            mix_seed(&[cfg.seed, u64::MAX, kind_index(*kind), u64::MAX]),
        ));
    }
    Ok(BatchResult { rows, logs })
}

/// Counts regular tasks by type, for reports.
pub fn type_counts(tasks: &[(String, TaskSpec)]) -> (usize, usize) {
    let a = tasks.iter().filter(|(_, t)| t.task_type == TaskType::A).count();
    let b = tasks.iter().filter(|(_, t)| t.task_type == TaskType::B).count();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_mixing_is_stable_and_sensitive() {
        assert_eq!(mix_seed(&[1, 2, 3]), mix_seed(&[1, 2, 3]));
        assert_ne!(mix_seed(&[1, 2, 3]), mix_seed(&[1, 3, 2]));
        assert_ne!(mix_seed(&[0]), mix_seed(&[1]));
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        assert_eq!(bootstrap_ci(&[true; 10], 1000, 1), (1.0, 1.0));
        assert_eq!(bootstrap_ci(&[false; 10], 1000, 1), (0.0, 0.0));
        let mixed: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let (lo, hi) = bootstrap_ci(&mixed, 10_000, 7);
        assert!(lo < 0.5 && hi > 0.5);
        assert!(lo > 0.35 && hi < 0.65);
        assert_eq!(bootstrap_ci(&mixed, 10_000, 7), (lo, hi));
    }
}
