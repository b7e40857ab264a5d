//! Belief-space planning for the three collaborative agents.
//!
//! The hidden factor is the human's current target. Each agent kind differs
//! only in how it expects that target to evolve after the agent acts
//! ([`theta_transition`]); the human's action is the observation, with the
//! Boltzmann likelihood from [`crate::human::human_action_dist`].
//!
//! [`solve`] runs finite-horizon point-based backups over the reachable
//! observable states, last step first. Each state carries a belief set: an
//! even grid over the simplex plus the beliefs actually reachable from the
//! initial belief (up to a cap). Every backup yields one alpha-vector per
//! (belief point, agent action); the non-dominated ones form `Γ^a(o)`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::transition_reward;
use crate::error::{BeliefError, PlanError};
use crate::human::{agent_action_dist, human_action_dist, Belief};
use crate::planning::{StateGraph, Tables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Supportive,
    Explicit,
    Implicit,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Supportive, AgentKind::Explicit, AgentKind::Implicit];
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            AgentKind::Supportive => "supportive",
            AgentKind::Explicit => "explicit",
            AgentKind::Implicit => "implicit",
        })
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supportive" => Ok(AgentKind::Supportive),
            "explicit" => Ok(AgentKind::Explicit),
            "implicit" => Ok(AgentKind::Implicit),
            other => Err(format!("unknown agent type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub beta1: f64,
    pub beta2: f64,
    /// Grid resolution per simplex edge (20 gives 21 points for two targets).
    pub grid_resolution: usize,
    /// Reachable beliefs added per observable state on top of the grid.
    pub reachable_points_per_state: usize,
    /// Cap on belief points across all states.
    pub max_belief_points: usize,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            beta1: 1.0,
            beta2: 5.0,
            grid_resolution: 20,
            reachable_points_per_state: 256,
            max_belief_points: 20_000_000,
        }
    }
}

/// Observations below this probability are not expanded when collecting
/// reachable beliefs.
pub const REACHABLE_MIN_PROB: f64 = 1e-9;

/// Ties in action values closer than this go to the lower action index.
pub const TIE_EPS: f64 = 1e-9;

/// Distribution over the human's next target after the agent takes
/// `agent_action`, given the current target marginal.
pub fn theta_transition(
    kind: AgentKind,
    tables: &Tables,
    theta_star: usize,
    state: usize,
    agent_action: usize,
    current: &Belief,
    beta2: f64,
) -> Belief {
    match kind {
        AgentKind::Supportive => current.clone(),
        AgentKind::Explicit => Belief::point(tables.n_theta(), theta_star),
        AgentKind::Implicit => {
            let lik: Vec<f64> = (0..tables.n_theta())
                .map(|th| agent_action_dist(tables, state, th, beta2)[agent_action])
                .collect();
            predict(kind, theta_star, Some(&lik), current)
        }
    }
}

/// Precomputed likelihoods for one state.
#[derive(Debug, Clone)]
struct StateModel {
    n_agent: usize,
    n_human: usize,
    /// `[agent][theta][human]`
    human: Vec<f64>,
    /// `[theta][agent]`
    agent: Vec<f64>,
}

impl StateModel {
    fn human_lik(&self, n_theta: usize, a: usize, h: usize) -> Vec<f64> {
        (0..n_theta)
            .map(|th| self.human[(a * n_theta + th) * self.n_human + h])
            .collect()
    }

    fn agent_lik(&self, n_theta: usize, a: usize) -> Vec<f64> {
        (0..n_theta).map(|th| self.agent[th * self.n_agent + a]).collect()
    }
}

struct Model {
    kind: AgentKind,
    theta_star: usize,
    n_theta: usize,
    states: Vec<Option<StateModel>>,
}

impl Model {
    fn new(tables: &Tables, kind: AgentKind, params: &AgentParams) -> Self {
        let n_theta = tables.n_theta();
        let states = (0..tables.graph.len())
            .into_par_iter()
            .map(|s| {
                let node = &tables.graph.nodes[s];
                if node.is_terminal() {
                    return None;
                }
                let (na, nh) = (node.n_agent(), node.n_human());
                let mut human = Vec::with_capacity(na * n_theta * nh);
                for a in 0..na {
                    for th in 0..n_theta {
                        human.extend(human_action_dist(tables, s, a, th, params.beta1));
                    }
                }
                let mut agent = Vec::with_capacity(n_theta * na);
                for th in 0..n_theta {
                    agent.extend(agent_action_dist(tables, s, th, params.beta2));
                }
                Some(StateModel {
                    n_agent: na,
                    n_human: nh,
                    human,
                    agent,
                })
            })
            .collect();
        Model {
            kind,
            theta_star: tables.best_target_index(),
            n_theta,
            states,
        }
    }

    fn sm(&self, s: usize) -> &StateModel {
        self.states[s].as_ref().expect("non-terminal state")
    }
}

fn belief_key(b: &Belief) -> Vec<i64> {
    b.probs().iter().map(|p| (p * 1e12).round() as i64).collect()
}

fn simplex_grid(n: usize, resolution: usize) -> Vec<Belief> {
    fn rec(n: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(n - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    if n == 1 {
        return vec![Belief::point(1, 0)];
    }
    let r = if n == 2 {
        resolution
    } else {
        (resolution / (n - 1)).max(2)
    };
    let mut raw = Vec::new();
    rec(n, r, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| Belief::from_weights(c.into_iter().map(|x| x as f64).collect()).unwrap())
        .collect()
}

/// Alpha-vector policy for one task and agent kind.
///
/// Alpha-vectors are over the *predicted* target belief, i.e. after the
/// kind's target transition for that action. For the implicit agent the
/// transition depends on the belief, so it is applied at evaluation time
/// from the stored per-action likelihoods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub kind: AgentKind,
    pub theta_star: usize,
    pub n_theta: usize,
    pub params: AgentParams,
    /// `gamma[state][agent_action]`
    pub gamma: Vec<Vec<Vec<Vec<f64>>>>,
    /// Implicit only: `agent_lik[state][agent_action][theta]`.
    pub agent_lik: Vec<Vec<Vec<f64>>>,
    /// Per state, the backed-up alpha of every action at each belief
    /// reachable from the initial belief.
    pub points: Vec<Vec<PointAlphas>>,
    pub meta: PolicyMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAlphas {
    pub key: Vec<i64>,
    pub alphas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PolicyMeta {
    pub horizon: u32,
    pub grid_points: usize,
    pub belief_points: usize,
    pub alpha_vectors: usize,
    pub value_residual: f64,
}

/// The target transition given the action's likelihood vector (implicit
/// only). Underflow keeps the current belief.
fn predict(kind: AgentKind, theta_star: usize, lik: Option<&[f64]>, b: &Belief) -> Belief {
    match kind {
        AgentKind::Supportive => b.clone(),
        AgentKind::Explicit => Belief::point(b.len(), theta_star),
        AgentKind::Implicit => {
            let lik = lik.expect("implicit transition needs the agent likelihood");
            b.reweight(lik).unwrap_or_else(|_| b.clone())
        }
    }
}

fn max_dot(b: &Belief, alphas: &[Vec<f64>]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, al) in alphas.iter().enumerate() {
        let v = b.dot(al);
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

impl AgentPolicy {
    pub fn initial_belief(&self) -> Belief {
        match self.kind {
            AgentKind::Explicit => Belief::point(self.n_theta, self.theta_star),
            _ => Belief::uniform(self.n_theta),
        }
    }

    fn lik(&self, state: usize, a: usize) -> Option<&[f64]> {
        self.agent_lik
            .get(state)
            .and_then(|l| l.get(a))
            .map(|l| l.as_slice())
    }

    /// Value of every agent action at belief `b`: the stored backup when `b`
    /// is a solved point, otherwise `max_{α ∈ Γ^a(o)}` over the predicted
    /// belief.
    pub fn action_values(&self, state: usize, b: &Belief) -> Result<Vec<f64>, PlanError> {
        let per_action = self.gamma.get(state).ok_or(PlanError::MissingState)?;
        if per_action.is_empty() {
            return Err(PlanError::MissingState);
        }
        let key = belief_key(b);
        let exact = self
            .points
            .get(state)
            .and_then(|ps| ps.iter().find(|p| p.key == key));
        Ok(per_action
            .iter()
            .enumerate()
            .map(|(a, alphas)| {
                let bh = predict(self.kind, self.theta_star, self.lik(state, a), b);
                match exact {
                    Some(p) => bh.dot(&p.alphas[a]),
                    None => max_dot(&bh, alphas).0,
                }
            })
            .collect())
    }

    /// Value of the belief in `state`: the best action value.
    pub fn value(&self, state: usize, b: &Belief) -> Result<f64, PlanError> {
        Ok(self
            .action_values(state, b)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// The most valuable agent action, lowest index on ties.
    pub fn select_action(&self, state: usize, b: &Belief) -> Result<usize, PlanError> {
        Ok(argmax_tie_low(&self.action_values(state, b)?))
    }
}

pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] + TIE_EPS {
            best = i;
        }
    }
    best
}

/// Per-state working storage during the backward pass.
#[derive(Debug, Clone, Default)]
struct StateSolution {
    /// Backed-up alpha per action at each solved belief point.
    point_alphas: Vec<Vec<Vec<f64>>>,
    point_index: HashMap<Vec<i64>, usize>,
    /// Number of leading points that came from the reachable set.
    n_reachable: usize,
    point_keys: Vec<Vec<i64>>,
    /// Pruned alpha sets per action.
    gamma: Vec<Vec<Vec<f64>>>,
}

impl StateSolution {
    /// A vector `c` over targets with `b·c` equal to this state's value at
    /// `b`, built from the best action's alpha.
    fn continuation(&self, model: &Model, s: usize, b: &Belief) -> Vec<f64> {
        let sm = model.sm(s);
        let exact = self.point_index.get(&belief_key(b)).copied();
        let mut best: Option<(f64, usize, &Vec<f64>)> = None;
        for a in 0..sm.n_agent {
            let lik = sm.agent_lik(model.n_theta, a);
            let bh = predict(model.kind, model.theta_star, Some(&lik), b);
            let (v, al) = match exact {
                Some(i) => {
                    let al = &self.point_alphas[i][a];
                    (bh.dot(al), al)
                }
                None => {
                    let (v, j) = max_dot(&bh, &self.gamma[a]);
                    (v, &self.gamma[a][j])
                }
            };
            if best.is_none_or(|(bv, _, _)| v > bv + TIE_EPS) {
                best = Some((v, a, al));
            }
        }
        let (_, a, alpha) = best.expect("non-terminal state has actions");
        if model.kind != AgentKind::Implicit {
            return alpha.clone();
        }
        // b·c = predict(b)·alpha, with predict(b) = b⊙L / (b·L)
        let lik = sm.agent_lik(model.n_theta, a);
        if b.reweight(&lik).is_err() {
            return alpha.clone();
        }
        let z = b.dot(&lik);
        b.probs()
            .iter()
            .zip(&lik)
            .zip(alpha)
            .map(|((p, l), al)| if *p > 0.0 { l * al / z } else { *al })
            .collect()
    }
}

fn prune(mut alphas: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    alphas.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    let mut keep = Vec::new();
    for (i, a) in alphas.iter().enumerate() {
        let dominated = alphas.iter().enumerate().any(|(j, b)| {
            j != i
                && a.iter().zip(b).all(|(x, y)| x <= y)
                && (a.iter().zip(b).any(|(x, y)| x < y) || j < i)
        });
        if !dominated {
            keep.push(a.clone());
        }
    }
    keep
}

/// Collects beliefs reachable from the initial belief, layer by layer.
fn reachable_beliefs(
    model: &Model,
    graph: &StateGraph,
    b0: &Belief,
    per_state: usize,
    total_cap: usize,
) -> Vec<Vec<Belief>> {
    let n = graph.len();
    let mut points: Vec<Vec<Belief>> = vec![Vec::new(); n];
    let mut keys: Vec<HashMap<Vec<i64>, ()>> = vec![HashMap::new(); n];
    if per_state == 0 {
        return points;
    }
    points[StateGraph::ROOT].push(b0.clone());
    keys[StateGraph::ROOT].insert(belief_key(b0), ());
    let mut total = 1usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| graph.states[i].step);
    for s in order {
        let node = &graph.nodes[s];
        if node.is_terminal() || points[s].is_empty() {
            continue;
        }
        let sm = model.sm(s);
        let current = points[s].clone();
        for b in &current {
            for a in 0..sm.n_agent {
                let agent_lik = sm.agent_lik(model.n_theta, a);
                let bh = predict(model.kind, model.theta_star, Some(&agent_lik), b);
                for h in 0..sm.n_human {
                    let lik = sm.human_lik(model.n_theta, a, h);
                    if bh.dot(&lik) < REACHABLE_MIN_PROB {
                        continue;
                    }
                    let b2 = bh.reweight(&lik).unwrap_or_else(|_| bh.clone());
                    let next = node.outcome(a, h).next;
                    if graph.nodes[next].is_terminal() || points[next].len() >= per_state {
                        continue;
                    }
                    let k = belief_key(&b2);
                    if keys[next].insert(k, ()).is_none() {
                        points[next].push(b2);
                        total += 1;
                        if total >= total_cap {
                            return points;
                        }
                    }
                }
            }
        }
    }
    points
}

/// Builds the alpha-vector policy for `kind`.
pub fn solve(tables: &Tables, kind: AgentKind, params: &AgentParams) -> Result<AgentPolicy, PlanError> {
    let graph = &*tables.graph;
    let n_theta = tables.n_theta();
    let theta_star = tables.best_target_index();
    let value_residual = tables.values.iter().map(|v| v.residual).fold(0.0, f64::max);
    let horizon = tables.task().horizon;

    if kind == AgentKind::Explicit {
        let table = &tables.values[theta_star];
        let gamma: Vec<Vec<Vec<Vec<f64>>>> = (0..graph.len())
            .map(|s| {
                (0..graph.nodes[s].n_agent())
                    .map(|a| vec![vec![table.agent_action_value(graph, s, a); n_theta]])
                    .collect()
            })
            .collect();
        let alpha_vectors = gamma.iter().map(|g| g.len()).sum();
        return Ok(AgentPolicy {
            kind,
            theta_star,
            n_theta,
            params: *params,
            gamma,
            agent_lik: Vec::new(),
            points: Vec::new(),
            meta: PolicyMeta {
                horizon,
                grid_points: 1,
                belief_points: graph.len(),
                alpha_vectors,
                value_residual,
            },
        });
    }

    let grid = simplex_grid(n_theta, params.grid_resolution);
    let non_terminal = graph.nodes.iter().filter(|n| !n.is_terminal()).count();
    if non_terminal.saturating_mul(grid.len()) > params.max_belief_points {
        return Err(PlanError::BeliefBlowUp {
            cap: params.max_belief_points,
        });
    }

    let model = Model::new(tables, kind, params);
    let b0 = Belief::uniform(n_theta);
    let extra = reachable_beliefs(
        &model,
        graph,
        &b0,
        params.reachable_points_per_state,
        params.max_belief_points - non_terminal * grid.len(),
    );

    // layers by step, deepest first
    let max_step = graph.states.iter().map(|s| s.step).max().unwrap_or(0);
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); max_step as usize + 1];
    for (i, s) in graph.states.iter().enumerate() {
        layers[s.step as usize].push(i);
    }

    let discount = tables.config.discount;
    let rewards = tables.task().rewards;
    let thetas = tables.theta_ids();
    let mut solutions: Vec<StateSolution> = vec![StateSolution::default(); graph.len()];
    let mut belief_points = 0usize;

    for layer in layers.iter().rev() {
        let solved: Vec<(usize, StateSolution)> = layer
            .par_iter()
            .filter(|&&s| !graph.nodes[s].is_terminal())
            .map(|&s| {
                let node = &graph.nodes[s];
                let sm = model.sm(s);
                let mut points: Vec<Belief> = Vec::new();
                let mut point_index: HashMap<Vec<i64>, usize> = HashMap::new();
                let mut point_keys = Vec::new();
                for b in extra[s].iter().chain(&grid) {
                    let k = belief_key(b);
                    if !point_index.contains_key(&k) {
                        point_index.insert(k.clone(), points.len());
                        point_keys.push(k);
                        points.push(b.clone());
                    }
                }
                let mut per_action: Vec<Vec<Vec<f64>>> = vec![Vec::new(); sm.n_agent];
                let mut point_alphas = Vec::with_capacity(points.len());
                for b in &points {
                    let mut own = Vec::with_capacity(sm.n_agent);
                    for (a, alphas) in per_action.iter_mut().enumerate() {
                        let agent_lik = sm.agent_lik(n_theta, a);
                        let bh = predict(kind, theta_star, Some(&agent_lik), b);
                        let mut alpha = vec![0.0; n_theta];
                        for h in 0..sm.n_human {
                            let lik = sm.human_lik(n_theta, a, h);
                            let out = node.outcome(a, h);
                            let cont = if graph.nodes[out.next].is_terminal() {
                                None
                            } else {
                                let b2 = bh.reweight(&lik).unwrap_or_else(|_| bh.clone());
                                Some(solutions[out.next].continuation(&model, out.next, &b2))
                            };
                            for th in 0..n_theta {
                                let r = transition_reward(
                                    out.primitive_steps,
                                    out.captured,
                                    thetas[th],
                                    &rewards,
                                );
                                let c = cont.as_ref().map_or(0.0, |c| c[th]);
                                alpha[th] += lik[th] * (r + discount * c);
                            }
                        }
                        alphas.push(alpha.clone());
                        own.push(alpha);
                    }
                    point_alphas.push(own);
                }
                let gamma = per_action.into_iter().map(prune).collect();
                (
                    s,
                    StateSolution {
                        point_alphas,
                        point_index,
                        n_reachable: extra[s].len(),
                        point_keys,
                        gamma,
                    },
                )
            })
            .collect();
        for (s, sol) in solved {
            belief_points += sol.point_alphas.len();
            solutions[s] = sol;
        }
    }

    let mut gamma = Vec::with_capacity(graph.len());
    let mut points = Vec::with_capacity(graph.len());
    for sol in solutions {
        let reach: Vec<PointAlphas> = sol
            .point_keys
            .into_iter()
            .zip(sol.point_alphas)
            .take(sol.n_reachable)
            .map(|(key, alphas)| PointAlphas { key, alphas })
            .collect();
        points.push(reach);
        gamma.push(sol.gamma);
    }
    let agent_lik = if kind == AgentKind::Implicit {
        (0..graph.len())
            .map(|s| match &model.states[s] {
                Some(sm) => (0..sm.n_agent).map(|a| sm.agent_lik(n_theta, a)).collect(),
                None => Vec::new(),
            })
            .collect()
    } else {
        Vec::new()
    };
    let alpha_vectors = gamma.iter().flatten().map(|g: &Vec<Vec<f64>>| g.len()).sum();
    Ok(AgentPolicy {
        kind,
        theta_star,
        n_theta,
        params: *params,
        gamma,
        agent_lik,
        points,
        meta: PolicyMeta {
            horizon,
            grid_points: grid.len(),
            belief_points,
            alpha_vectors,
            value_residual,
        },
    })
}

/// The agent's running belief plus the policy it acts on.
#[derive(Debug, Clone)]
pub struct AgentState<'p> {
    pub belief: Belief,
    pub policy: &'p AgentPolicy,
}

impl<'p> AgentState<'p> {
    pub fn new(policy: &'p AgentPolicy) -> Self {
        AgentState {
            belief: policy.initial_belief(),
            policy,
        }
    }

    pub fn select_action(&self, state: usize) -> Result<usize, PlanError> {
        self.policy.select_action(state, &self.belief)
    }

    /// Predict with the kind's target transition, then weigh by the
    /// likelihood of the observed human action. On underflow the predicted
    /// belief is kept and a warning returned.
    pub fn update_belief(
        &self,
        tables: &Tables,
        state: usize,
        agent_action: usize,
        human_action: usize,
    ) -> (AgentState<'p>, Option<String>) {
        let (belief, warning) = update_belief(
            self.policy.kind,
            tables,
            self.policy.theta_star,
            &self.belief,
            state,
            agent_action,
            human_action,
            self.policy.params.beta1,
            self.policy.params.beta2,
        );
        (
            AgentState {
                belief,
                policy: self.policy,
            },
            warning,
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub fn update_belief(
    kind: AgentKind,
    tables: &Tables,
    theta_star: usize,
    belief: &Belief,
    state: usize,
    agent_action: usize,
    human_action: usize,
    beta1: f64,
    beta2: f64,
) -> (Belief, Option<String>) {
    let predicted = theta_transition(kind, tables, theta_star, state, agent_action, belief, beta2);
    let lik: Vec<f64> = (0..tables.n_theta())
        .map(|th| human_action_dist(tables, state, agent_action, th, beta1)[human_action])
        .collect();
    match predicted.reweight(&lik) {
        Ok(b) => (b, None),
        Err(BeliefError::Degenerate) => (
            predicted,
            Some("agent belief update underflowed; kept prediction".into()),
        ),
    }
}
