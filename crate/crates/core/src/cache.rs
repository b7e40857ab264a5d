//! On-disk caches for value tables and agent policies.
//!
//! Files are JSON, named by a SHA-256 key over the task's content hash and
//! the solver parameters, so editing a task invalidates its entries.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agent::{solve, AgentKind, AgentParams, AgentPolicy};
use crate::env::Env;
use crate::error::PlanError;
use crate::planning::{enumerate_states, value_iteration, PlanningConfig, Tables, ValueTable};
use crate::task::{TargetId, TaskSpec};

fn key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    format!("{:x}", h.finalize())
}

pub fn value_table_path(dir: &Path, task: &TaskSpec, theta: TargetId, cfg: &PlanningConfig) -> PathBuf {
    let k = key(&[
        "values",
        &task.content_hash(),
        &theta.0.to_string(),
        &format!("{:e}", cfg.convergence_tol),
        &cfg.max_sweeps.to_string(),
        &format!("{:e}", cfg.discount),
    ]);
    dir.join(format!("values-{k}.json"))
}

pub fn policy_path(dir: &Path, task: &TaskSpec, kind: AgentKind, params: &AgentParams) -> PathBuf {
    let p = serde_json::to_string(params).expect("params serialize");
    let k = key(&["policy", &task.content_hash(), &kind.to_string(), &p]);
    dir.join(format!("policy-{kind}-{k}.json"))
}

fn load<T: DeserializeOwned>(path: &Path) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Writes through a temporary file so readers never see a partial entry.
fn store<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(value).map_err(std::io::Error::other)?)?;
    fs::rename(tmp, path)
}

/// `Tables::build`, reading and filling the value-table cache in `dir`.
/// Unreadable entries are recomputed; write failures are ignored.
pub fn build_tables(task: TaskSpec, cfg: PlanningConfig, dir: &Path) -> Result<Tables, PlanError> {
    let env = Env::new(task);
    let graph = enumerate_states(&env, cfg.state_cap)?;
    let values = env
        .task()
        .theta_space()
        .into_par_iter()
        .map(|theta| {
            let path = value_table_path(dir, env.task(), theta, &cfg);
            if let Some(t) = load::<ValueTable>(&path) {
                if t.theta == theta && t.v.len() == graph.len() {
                    return Ok(t);
                }
            }
            let t = value_iteration(&graph, env.task(), theta, &cfg)?;
            let _ = store(&path, &t);
            Ok(t)
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok(Tables {
        env: Arc::new(env),
        graph: Arc::new(graph),
        values,
        config: cfg,
    })
}

/// `solve`, reading and filling the policy cache in `dir`.
pub fn solve_cached(
    tables: &Tables,
    kind: AgentKind,
    params: &AgentParams,
    dir: &Path,
) -> Result<AgentPolicy, PlanError> {
    let path = policy_path(dir, tables.task(), kind, params);
    if let Some(p) = load::<AgentPolicy>(&path) {
        if p.kind == kind && p.gamma.len() == tables.graph.len() {
            return Ok(p);
        }
    }
    let p = solve(tables, kind, params)?;
    let _ = store(&path, &p);
    Ok(p)
}
