//! Joint-action MDP for a known target: reachable-state enumeration, value
//! iteration and the best target.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{transition_reward, CompressedAction, Env, Mover, ObservableState};
use crate::error::PlanError;
use crate::task::{TargetId, TaskSpec};

pub const DEFAULT_STATE_CAP: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub discount: f64,
    pub convergence_tol: f64,
    pub max_sweeps: usize,
    pub state_cap: usize,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig {
            discount: 0.99,
            convergence_tol: 1e-6,
            max_sweeps: 10_000,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl PlanningConfig {
    pub fn for_task(task: &TaskSpec) -> Self {
        PlanningConfig {
            discount: task.discount,
            ..Default::default()
        }
    }
}

/// Result of one joint action pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub next: usize,
    pub primitive_steps: u32,
    pub captured: Option<TargetId>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub agent_actions: Vec<CompressedAction>,
    pub human_actions: Vec<CompressedAction>,
    /// Row-major `[agent][human]`; empty for terminal states.
    pub outcomes: Vec<Outcome>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_agent(&self) -> usize {
        self.agent_actions.len()
    }

    pub fn n_human(&self) -> usize {
        self.human_actions.len()
    }

    pub fn outcome(&self, agent: usize, human: usize) -> &Outcome {
        &self.outcomes[agent * self.human_actions.len() + human]
    }
}

/// Every observable state reachable from the start, with its transitions.
#[derive(Debug, Clone)]
pub struct StateGraph {
    pub states: Vec<ObservableState>,
    pub nodes: Vec<Node>,
    index: HashMap<ObservableState, usize>,
}

impl StateGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &ObservableState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub const ROOT: usize = 0;

    /// State indices ordered so every successor comes before its parent.
    pub fn reverse_topological(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.states[i].step));
        order
    }
}

/// Breadth-first enumeration under every legal compressed-action pair.
pub fn enumerate_states(env: &Env, cap: usize) -> Result<StateGraph, PlanError> {
    let s0 = env.initial_state();
    let mut states = vec![s0.clone()];
    let mut index = HashMap::from([(s0, 0usize)]);
    let mut nodes = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let s = states[i].clone();
        debug_assert_eq!(nodes.len(), i);
        if env.is_terminal(&s) {
            nodes.push(Node {
                agent_actions: Vec::new(),
                human_actions: Vec::new(),
                outcomes: Vec::new(),
            });
            continue;
        }
        let agent_actions = env.available_actions(&s, Mover::Agent);
        let human_actions = env.available_actions(&s, Mover::Human);
        let mut outcomes = Vec::with_capacity(agent_actions.len() * human_actions.len());
        for a in &agent_actions {
            for h in &human_actions {
                let t = env.apply(&s, h, a);
                let primitive_steps = t.primitive_steps();
                let next = match index.get(&t.next) {
                    Some(&j) => j,
                    None => {
                        let j = states.len();
                        if j >= cap {
                            return Err(PlanError::StateBlowUp { cap });
                        }
                        index.insert(t.next.clone(), j);
                        states.push(t.next);
                        queue.push_back(j);
                        j
                    }
                };
                outcomes.push(Outcome {
                    next,
                    primitive_steps,
                    captured: t.captured,
                });
            }
        }
        nodes.push(Node {
            agent_actions,
            human_actions,
            outcomes,
        });
    }
    Ok(StateGraph {
        states,
        nodes,
        index,
    })
}

/// Optimal joint values for one target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTable {
    pub theta: TargetId,
    pub v: Vec<f64>,
    /// Per state, row-major `[agent][human]` like `Node::outcomes`.
    pub q: Vec<Vec<f64>>,
    pub residual: f64,
    pub sweeps: usize,
}

impl ValueTable {
    pub fn q(&self, graph: &StateGraph, state: usize, agent: usize, human: usize) -> f64 {
        self.q[state][agent * graph.nodes[state].n_human() + human]
    }

    /// Q of an arbitrary action pair: the table entry when both actions are
    /// legal in `state`, otherwise the invalid-action penalty.
    pub fn q_or_invalid(
        &self,
        graph: &StateGraph,
        task: &TaskSpec,
        state: usize,
        agent: &CompressedAction,
        human: &CompressedAction,
    ) -> f64 {
        let node = &graph.nodes[state];
        let a = node.agent_actions.iter().position(|x| x == agent);
        let h = node.human_actions.iter().position(|x| x == human);
        match (a, h) {
            (Some(a), Some(h)) => self.q(graph, state, a, h),
            _ => task.rewards.invalid_action,
        }
    }

    /// Value of committing to agent action `agent` with the human answering
    /// optimally: `max_h Q(o, a, h)`.
    pub fn agent_action_value(&self, graph: &StateGraph, state: usize, agent: usize) -> f64 {
        let nh = graph.nodes[state].n_human();
        self.q[state][agent * nh..(agent + 1) * nh]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn backup(
    graph: &StateGraph,
    task: &TaskSpec,
    theta: TargetId,
    discount: f64,
    v: &[f64],
    state: usize,
) -> Vec<f64> {
    graph.nodes[state]
        .outcomes
        .iter()
        .map(|o| {
            transition_reward(o.primitive_steps, o.captured, theta, &task.rewards)
                + discount * v[o.next]
        })
        .collect()
}

fn max_of(q: &[f64]) -> f64 {
    if q.is_empty() {
        0.0
    } else {
        q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Synchronous value iteration until the Bellman residual drops below the
/// tolerance.
pub fn value_iteration(
    graph: &StateGraph,
    task: &TaskSpec,
    theta: TargetId,
    cfg: &PlanningConfig,
) -> Result<ValueTable, PlanError> {
    if task.evader_index(theta).is_none() {
        return Err(PlanError::UnknownTarget(theta));
    }
    let mut v = vec![0.0; graph.len()];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while residual > cfg.convergence_tol {
        if sweeps >= cfg.max_sweeps {
            return Err(PlanError::NonConvergence { sweeps, residual });
        }
        let next: Vec<f64> = (0..graph.len())
            .map(|s| max_of(&backup(graph, task, theta, cfg.discount, &v, s)))
            .collect();
        residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        sweeps += 1;
    }
    let q: Vec<Vec<f64>> = (0..graph.len())
        .map(|s| backup(graph, task, theta, cfg.discount, &v, s))
        .collect();
    let v = q.iter().map(|qs| max_of(qs)).collect();
    Ok(ValueTable {
        theta,
        v,
        q,
        residual,
        sweeps,
    })
}

/// Exactly `sweeps` synchronous sweeps from zero: the finite-horizon values.
pub fn truncated_values(
    graph: &StateGraph,
    task: &TaskSpec,
    theta: TargetId,
    discount: f64,
    sweeps: usize,
) -> Vec<f64> {
    let mut v = vec![0.0; graph.len()];
    for _ in 0..sweeps {
        v = (0..graph.len())
            .map(|s| max_of(&backup(graph, task, theta, discount, &v, s)))
            .collect();
    }
    v
}

/// Tie-broken argmax of `V(o0; theta)` over the target space.
pub fn best_target(task: &TaskSpec, tables: &[ValueTable]) -> TargetId {
    let mut best: Option<(f64, TargetId)> = None;
    for theta in task.theta_space() {
        let table = tables
            .iter()
            .find(|t| t.theta == theta)
            .expect("a table for every target");
        let v = table.v[StateGraph::ROOT];
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, theta));
        }
    }
    best.expect("non-empty target space").1
}

/// Everything the human and agent models read: the environment, its state
/// graph and one value table per target (in target-space order).
#[derive(Debug, Clone)]
pub struct Tables {
    pub env: Arc<Env>,
    pub graph: Arc<StateGraph>,
    pub values: Vec<ValueTable>,
    pub config: PlanningConfig,
}

impl Tables {
    pub fn build(task: TaskSpec, cfg: PlanningConfig) -> Result<Tables, PlanError> {
        let env = Env::new(task);
        let graph = enumerate_states(&env, cfg.state_cap)?;
        let values = env
            .task()
            .theta_space()
            .into_par_iter()
            .map(|theta| value_iteration(&graph, env.task(), theta, &cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tables {
            env: Arc::new(env),
            graph: Arc::new(graph),
            values,
            config: cfg,
        })
    }

    pub fn task(&self) -> &TaskSpec {
        self.env.task()
    }

    pub fn n_theta(&self) -> usize {
        self.values.len()
    }

    pub fn theta_ids(&self) -> Vec<TargetId> {
        self.values.iter().map(|t| t.theta).collect()
    }

    pub fn theta_index(&self, id: TargetId) -> Option<usize> {
        self.values.iter().position(|t| t.theta == id)
    }

    pub fn best_target(&self) -> TargetId {
        best_target(self.task(), &self.values)
    }

    pub fn best_target_index(&self) -> usize {
        self.theta_index(self.best_target()).expect("known target")
    }
}
