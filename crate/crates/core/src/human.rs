//! The Boltzmann-rational human and its theory-of-mind inference about the
//! agent's target.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::BeliefError;
use crate::planning::Tables;

/// Probabilities proportional to `exp(beta * v)`, computed with the maximum
/// subtracted first.
pub fn softmax(values: &[f64], beta: f64) -> Vec<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values.iter().map(|v| (beta * (v - m)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// A distribution over the target space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, i: usize) -> Self {
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        Belief(p)
    }

    /// Normalizes non-negative weights; `None` if they sum to zero.
    pub fn from_weights(w: Vec<f64>) -> Option<Self> {
        let z: f64 = w.iter().sum();
        (z > 0.0 && z.is_finite()).then(|| Belief(w.into_iter().map(|x| x / z).collect()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|p| *p >= 0.0) && (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Bayes update with per-target likelihoods, done in log space.
    pub fn reweight(&self, likelihood: &[f64]) -> Result<Belief, BeliefError> {
        let logs: Vec<f64> = self
            .0
            .iter()
            .zip(likelihood)
            .map(|(p, l)| p.ln() + l.ln())
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() || m < 1e-300f64.ln() {
            return Err(BeliefError::Degenerate);
        }
        let w = logs.iter().map(|l| (l - m).exp()).collect();
        Ok(Belief::from_weights(w).expect("max term is one"))
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// `p(a_H | o, a_A; theta)`: softmax of the joint Q over the human's legal
/// actions.
pub fn human_action_dist(
    tables: &Tables,
    state: usize,
    agent_action: usize,
    theta: usize,
    beta1: f64,
) -> Vec<f64> {
    let nh = tables.graph.nodes[state].n_human();
    let q = &tables.values[theta].q[state][agent_action * nh..(agent_action + 1) * nh];
    softmax(q, beta1)
}

/// `p(a_A | o; theta)` for every agent action: softmax of the value after the
/// agent's move, `max_h Q(o, a_A, h; theta)`.
pub fn agent_action_dist(tables: &Tables, state: usize, theta: usize, beta2: f64) -> Vec<f64> {
    let node = &tables.graph.nodes[state];
    let values: Vec<f64> = (0..node.n_agent())
        .map(|a| tables.values[theta].agent_action_value(&tables.graph, state, a))
        .collect();
    softmax(&values, beta2)
}

pub fn agent_action_likelihood(
    tables: &Tables,
    state: usize,
    agent_action: usize,
    theta: usize,
    beta2: f64,
) -> f64 {
    agent_action_dist(tables, state, theta, beta2)[agent_action]
}

/// Posterior over the agent's target after watching it take `agent_action`.
pub fn tom_posterior(
    prior: &Belief,
    tables: &Tables,
    state: usize,
    agent_action: usize,
    beta2: f64,
) -> Result<Belief, BeliefError> {
    let lik: Vec<f64> = (0..tables.n_theta())
        .map(|th| agent_action_likelihood(tables, state, agent_action, th, beta2))
        .collect();
    prior.reweight(&lik)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanVariant {
    /// Infers the agent's target and adopts it.
    Tom,
    /// Keeps its initial target.
    Stubborn,
    /// Was told the best target and keeps it.
    Told,
}

impl std::str::FromStr for HumanVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tom" => Ok(HumanVariant::Tom),
            "stubborn" => Ok(HumanVariant::Stubborn),
            "told" => Ok(HumanVariant::Told),
            other => Err(format!("unknown human variant {other:?}")),
        }
    }
}

impl std::fmt::Display for HumanVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            HumanVariant::Tom => "tom",
            HumanVariant::Stubborn => "stubborn",
            HumanVariant::Told => "told",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanParams {
    pub beta1: f64,
    pub beta2: f64,
    pub variant: HumanVariant,
}

impl Default for HumanParams {
    fn default() -> Self {
        HumanParams {
            beta1: 1.0,
            beta2: 5.0,
            variant: HumanVariant::Tom,
        }
    }
}

/// A scripted participant. Updated functionally: each step returns a new
/// value carrying the advanced random stream.
#[derive(Debug, Clone)]
pub struct SimulatedHuman {
    pub params: HumanParams,
    pub target_belief: Belief,
    /// Index into the target space.
    pub current_target: usize,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct HumanStep {
    pub action: usize,
    pub human: SimulatedHuman,
    /// Set when the inference underflowed and the prior was kept.
    pub warning: Option<String>,
}

impl SimulatedHuman {
    /// `initial_target` is required for `Told` (the announced best target)
    /// and optional for `Stubborn`; otherwise the target is drawn from the
    /// uniform prior.
    pub fn new(
        params: HumanParams,
        n_theta: usize,
        seed: u64,
        initial_target: Option<usize>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (target_belief, current_target) = match (params.variant, initial_target) {
            (HumanVariant::Told, Some(t)) | (HumanVariant::Stubborn, Some(t)) => {
                (Belief::point(n_theta, t), t)
            }
            (HumanVariant::Told, None) => panic!("told human needs the announced target"),
            _ => {
                let b = Belief::uniform(n_theta);
                let t = sample(&b, &mut rng);
                if params.variant == HumanVariant::Stubborn {
                    (Belief::point(n_theta, t), t)
                } else {
                    (b, t)
                }
            }
        };
        SimulatedHuman {
            params,
            target_belief,
            current_target,
            rng,
        }
    }

    /// Observe the agent's chosen action in `state`, settle on a target and
    /// pick a human action.
    pub fn step(&self, tables: &Tables, state: usize, agent_action: usize) -> HumanStep {
        let mut next = self.clone();
        let mut warning = None;
        if self.params.variant == HumanVariant::Tom {
            match tom_posterior(
                &self.target_belief,
                tables,
                state,
                agent_action,
                self.params.beta2,
            ) {
                Ok(b) => next.target_belief = b,
                Err(e) => warning = Some(format!("human inference kept prior: {e}")),
            }
            next.current_target = sample(&next.target_belief, &mut next.rng);
        }
        let dist = human_action_dist(
            tables,
            state,
            agent_action,
            next.current_target,
            self.params.beta1,
        );
        let action = sample_probs(&dist, &mut next.rng);
        HumanStep {
            action,
            human: next,
            warning,
        }
    }
}

fn sample(b: &Belief, rng: &mut ChaCha8Rng) -> usize {
    sample_probs(b.probs(), rng)
}

fn sample_probs(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    WeightedIndex::new(p)
        .expect("valid distribution")
        .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_worked_value() {
        let p = softmax(&[1.0, 0.0], 1.0);
        assert!((p[0] - 0.7311).abs() < 5e-5);
        assert!((p[1] - 0.2689).abs() < 5e-5);
    }

    #[test]
    fn softmax_zero_beta_uniform() {
        let p = softmax(&[3.0, -7.0, 100.0], 0.0);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_beta_concentrates() {
        let p = softmax(&[1.0, 0.5, 0.0], 50.0);
        assert!(p[0] >= 0.999);
    }

    #[test]
    fn reweight_examples() {
        let b = Belief::uniform(2);
        let post = b.reweight(&[0.8, 0.2]).unwrap();
        assert!((post.probs()[0] - 0.8).abs() < 1e-12);
        let same = b.reweight(&[0.3, 0.3]).unwrap();
        assert!((same.probs()[0] - 0.5).abs() < 1e-12);
        let collapsed = b.reweight(&[0.0, 0.4]).unwrap();
        assert_eq!(collapsed.probs(), &[0.0, 1.0]);
        assert_eq!(b.reweight(&[0.0, 0.0]), Err(BeliefError::Degenerate));
        assert_eq!(b.reweight(&[1e-320, 1e-320]), Err(BeliefError::Degenerate));
    }

    #[test]
    fn variant_parse() {
        assert_eq!("told".parse::<HumanVariant>().unwrap(), HumanVariant::Told);
        assert!("x".parse::<HumanVariant>().is_err());
    }
}
