//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written from the model definitions directly, on top of
//! `Env` alone: no value tables, state graph, belief code or policies from
//! the crate under test.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use pursuit_core::env::transition_reward;
use pursuit_core::planning::{PlanningConfig, Tables};
use pursuit_core::{fixtures, AgentKind, Cell, Dir, Env, Mover, ObservableState, TargetId, TaskSpec};

pub fn task(name: &str) -> TaskSpec {
    fixtures::load(name).unwrap_or_else(|| panic!("no fixture {name}"))
}

pub fn with_horizon(mut t: TaskSpec, horizon: u32) -> TaskSpec {
    t.horizon = horizon;
    t
}

pub fn tables(t: TaskSpec) -> Tables {
    let cfg = PlanningConfig::for_task(&t);
    Tables::build(t, cfg).expect("tables")
}

/// Plain softmax, straight from the definition.
pub fn softmax(values: &[f64], beta: f64) -> Vec<f64> {
    let w: Vec<f64> = values.iter().map(|v| (beta * v).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// Counts reachable observable states by depth-first search over `Env::step`.
pub fn dfs_state_count(env: &Env) -> usize {
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![env.initial_state()];
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) || env.is_terminal(&s) {
            continue;
        }
        for a in env.available_actions(&s, Mover::Agent) {
            for h in env.available_actions(&s, Mover::Human) {
                stack.push(env.step(&s, &h, &a).unwrap().next);
            }
        }
    }
    seen.len()
}

/// Exhaustive joint expectimax for one target. Evaders are deterministic,
/// so every chance node has a single child and the recursion is a max over
/// joint action pairs. Memoized on the full observable state.
pub struct Expectimax<'a> {
    pub env: &'a Env,
    pub theta: TargetId,
    pub discount: f64,
    memo: HashMap<ObservableState, f64>,
}

impl<'a> Expectimax<'a> {
    pub fn new(env: &'a Env, theta: TargetId, discount: f64) -> Self {
        Expectimax {
            env,
            theta,
            discount,
            memo: HashMap::new(),
        }
    }

    pub fn value(&mut self, s: &ObservableState) -> f64 {
        if self.env.is_terminal(s) {
            return 0.0;
        }
        if let Some(v) = self.memo.get(s) {
            return *v;
        }
        let mut best = f64::NEG_INFINITY;
        for a in self.env.available_actions(s, Mover::Agent) {
            for h in self.env.available_actions(s, Mover::Human) {
                best = best.max(self.q(s, &a, &h));
            }
        }
        self.memo.insert(s.clone(), best);
        best
    }

    pub fn q(
        &mut self,
        s: &ObservableState,
        a: &pursuit_core::CompressedAction,
        h: &pursuit_core::CompressedAction,
    ) -> f64 {
        let t = self.env.step(s, h, a).unwrap();
        let r = transition_reward(
            t.primitive_steps(),
            t.captured,
            self.theta,
            &self.env.task().rewards,
        );
        r + self.discount * self.value(&t.next)
    }
}

/// Target with the highest exhaustive root value, lowest id on ties.
pub fn rollout_best_target(t: &TaskSpec) -> (TargetId, Vec<f64>) {
    let env = Env::new(t.clone());
    let s0 = env.initial_state();
    let values: Vec<f64> = t
        .theta_space()
        .into_iter()
        .map(|th| Expectimax::new(&env, th, t.discount).value(&s0))
        .collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    (t.theta_space()[best], values)
}

/// The evader move that maximizes the BFS distance to the nearest pursuer,
/// first of up, right, down, left on ties. `None` when the evader is boxed
/// in by pursuers and walls.
pub fn bfs_evader_move(env: &Env, s: &ObservableState, evader: usize) -> Option<Dir> {
    let grid = &env.task().grid;
    let pursuers: Vec<Cell> = std::iter::once(s.human.pos)
        .chain(s.agent.as_ref().map(|a| a.pos))
        .collect();
    let dist_from = |from: Cell| -> HashMap<Cell, u32> {
        let mut d = HashMap::from([(from, 0u32)]);
        let mut q = VecDeque::from([from]);
        while let Some(c) = q.pop_front() {
            for dir in Dir::ALL {
                if let Some(n) = grid.neighbor(c, dir) {
                    if grid.is_floor(n) && !d.contains_key(&n) {
                        d.insert(n, d[&c] + 1);
                        q.push_back(n);
                    }
                }
            }
        }
        d
    };
    let maps: Vec<HashMap<Cell, u32>> = pursuers.iter().map(|p| dist_from(*p)).collect();
    let here = s.evaders[evader];
    let mut best: Option<(u32, Dir)> = None;
    for dir in Dir::ALL {
        let Some(n) = grid.neighbor(here, dir) else {
            continue;
        };
        if !grid.is_floor(n) || pursuers.contains(&n) {
            continue;
        }
        let score = maps
            .iter()
            .map(|m| m.get(&n).copied().unwrap_or(u32::MAX))
            .min()
            .unwrap();
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, dir));
        }
    }
    best.map(|(_, d)| d)
}

/// Exhaustive belief-tree expectimax for the three agent models.
///
/// The hidden target first moves by the agent kind's transition, then the
/// human answers with a Boltzmann choice over the joint Q of its target. The
/// explicit model is the best target's MDP with the human answering
/// optimally.
pub struct BeliefOracle<'a> {
    pub env: &'a Env,
    pub kind: AgentKind,
    pub beta1: f64,
    pub beta2: f64,
    pub theta_star: usize,
    thetas: Vec<TargetId>,
    solvers: Vec<Expectimax<'a>>,
}

/// Observation branches below this probability are not visited.
pub const MIN_BRANCH: f64 = 1e-9;

impl<'a> BeliefOracle<'a> {
    pub fn new(env: &'a Env, kind: AgentKind, beta1: f64, beta2: f64) -> Self {
        let t = env.task();
        let (theta_star, _) = rollout_best_target(t);
        let thetas = t.theta_space();
        BeliefOracle {
            env,
            kind,
            beta1,
            beta2,
            theta_star: thetas.iter().position(|x| *x == theta_star).unwrap(),
            solvers: thetas
                .iter()
                .map(|th| Expectimax::new(env, *th, t.discount))
                .collect(),
            thetas,
        }
    }

    pub fn initial_belief(&self) -> Vec<f64> {
        let n = self.thetas.len();
        match self.kind {
            AgentKind::Explicit => (0..n).map(|i| (i == self.theta_star) as u8 as f64).collect(),
            _ => vec![1.0 / n as f64; n],
        }
    }

    fn joint_q(&mut self, s: &ObservableState) -> Vec<Vec<Vec<f64>>> {
        let acts = self.env.available_actions(s, Mover::Agent);
        let hums = self.env.available_actions(s, Mover::Human);
        (0..self.thetas.len())
            .map(|th| {
                acts.iter()
                    .map(|a| hums.iter().map(|h| self.solvers[th].q(s, a, h)).collect())
                    .collect()
            })
            .collect()
    }

    fn normalize(w: Vec<f64>) -> Option<Vec<f64>> {
        let z: f64 = w.iter().sum();
        (z > 0.0).then(|| w.into_iter().map(|x| x / z).collect())
    }

    /// Belief over the human's target after it watched agent action `a`.
    pub fn predicted(&mut self, s: &ObservableState, b: &[f64], a: usize) -> Vec<f64> {
        match self.kind {
            AgentKind::Supportive => b.to_vec(),
            AgentKind::Explicit => (0..b.len()).map(|i| (i == self.theta_star) as u8 as f64).collect(),
            AgentKind::Implicit => {
                let q = self.joint_q(s);
                let w = (0..b.len())
                    .map(|th| {
                        let best: Vec<f64> = q[th]
                            .iter()
                            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                            .collect();
                        b[th] * softmax(&best, self.beta2)[a]
                    })
                    .collect();
                Self::normalize(w).unwrap_or_else(|| b.to_vec())
            }
        }
    }

    /// Per-action values at `(s, b)` plus the observation branches
    /// `(next state, next belief, probability)` of every action.
    #[allow(clippy::type_complexity)]
    pub fn expand(
        &mut self,
        s: &ObservableState,
        b: &[f64],
    ) -> (Vec<f64>, Vec<Vec<(ObservableState, Vec<f64>, f64)>>) {
        let acts = self.env.available_actions(s, Mover::Agent);
        let hums = self.env.available_actions(s, Mover::Human);
        let q = self.joint_q(s);
        let mut values = Vec::new();
        let mut branches = Vec::new();
        for (ai, a) in acts.iter().enumerate() {
            if self.kind == AgentKind::Explicit {
                let v = q[self.theta_star][ai]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                values.push(v);
                let mut br = Vec::new();
                for h in &hums {
                    br.push((self.env.step(s, h, a).unwrap().next, b.to_vec(), 1.0));
                }
                branches.push(br);
                continue;
            }
            let bh = self.predicted(s, b, ai);
            let lik: Vec<Vec<f64>> = (0..b.len()).map(|th| softmax(&q[th][ai], self.beta1)).collect();
            let mut v = 0.0;
            let mut br = Vec::new();
            for (hi, h) in hums.iter().enumerate() {
                let t = self.env.step(s, h, a).unwrap();
                let joint: Vec<f64> = (0..b.len()).map(|th| bh[th] * lik[th][hi]).collect();
                let p: f64 = joint.iter().sum();
                for (th, w) in joint.iter().enumerate() {
                    v += w * transition_reward(
                        t.primitive_steps(),
                        t.captured,
                        self.thetas[th],
                        &self.env.task().rewards,
                    );
                }
                let b2 = Self::normalize(joint).unwrap_or_else(|| bh.clone());
                if !self.env.is_terminal(&t.next) {
                    v += p * self.env.task().discount * self.value(&t.next, &b2);
                }
                br.push((t.next, b2, p));
            }
            values.push(v);
            branches.push(br);
        }
        (values, branches)
    }

    pub fn value(&mut self, s: &ObservableState, b: &[f64]) -> f64 {
        self.expand(s, b).0.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every non-terminal decision point `(state, belief)` reachable from the
    /// start under any agent action and any observation with probability at
    /// least [`MIN_BRANCH`], with the oracle's action values there.
    pub fn decision_points(&mut self) -> Vec<(ObservableState, Vec<f64>, Vec<f64>)> {
        let mut out = Vec::new();
        let mut stack = vec![(self.env.initial_state(), self.initial_belief())];
        while let Some((s, b)) = stack.pop() {
            if self.env.is_terminal(&s) {
                continue;
            }
            let (values, branches) = self.expand(&s, &b);
            for (next, b2, p) in branches.into_iter().flatten() {
                if p >= MIN_BRANCH {
                    stack.push((next, b2));
                }
            }
            out.push((s, b, values));
        }
        out
    }
}
