//! Frozen numbers. Each was first produced by the independent oracle in
//! `common` (softmax over exhaustive joint values) and is pinned here so
//! later solver changes cannot drift silently.

mod common;

use common::*;
use pursuit_core::human::{softmax as crate_softmax, tom_posterior};
use pursuit_core::planning::StateGraph;
use pursuit_core::{Belief, Dir, Env, Mover};

/// Posterior on the short-passage target after the agent's upward detour
/// on b1, from the oracle.
const B1_UP_POSTERIOR_SHORT: f64 = 4.267_936_488_557_2e-21;
/// Posterior on the long-passage target after the agent's central move.
const B1_LEFT_POSTERIOR_LONG: f64 = 0.292_437_654_485_351_4;

fn oracle_posterior(name: &str, first: Dir) -> Vec<f64> {
    let t = task(name);
    let env = Env::new(t.clone());
    let s0 = env.initial_state();
    let acts = env.available_actions(&s0, Mover::Agent);
    let hums = env.available_actions(&s0, Mover::Human);
    let ai = acts.iter().position(|a| a.first_move() == Some(first)).unwrap();
    let lik: Vec<f64> = t
        .theta_space()
        .into_iter()
        .map(|th| {
            let mut ex = Expectimax::new(&env, th, t.discount);
            let best: Vec<f64> = acts
                .iter()
                .map(|a| {
                    hums.iter()
                        .map(|h| ex.q(&s0, a, h))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            softmax(&best, 5.0)[ai]
        })
        .collect();
    let z: f64 = lik.iter().sum();
    lik.iter().map(|l| l / z).collect()
}

fn crate_posterior(name: &str, first: Dir) -> Vec<f64> {
    let tables = tables(task(name));
    let root = StateGraph::ROOT;
    let a = tables.graph.nodes[root]
        .agent_actions
        .iter()
        .position(|a| a.first_move() == Some(first))
        .unwrap();
    tom_posterior(&Belief::uniform(2), &tables, root, a, 5.0)
        .unwrap()
        .probs()
        .to_vec()
}

#[test]
fn oracle_reproduces_frozen_values() {
    let up = oracle_posterior("b1", Dir::Up);
    assert!((up[1] / B1_UP_POSTERIOR_SHORT - 1.0).abs() < 1e-6);
    let left = oracle_posterior("b1", Dir::Left);
    assert!((left[0] - B1_LEFT_POSTERIOR_LONG).abs() < 1e-9);
}

#[test]
fn detour_concentrates_tom_posterior() {
    let post = crate_posterior("b1", Dir::Up);
    assert!(post[0] > 0.9);
    assert!((post[1] / B1_UP_POSTERIOR_SHORT - 1.0).abs() < 1e-6);
    let left = crate_posterior("b1", Dir::Left);
    assert!((left[0] - B1_LEFT_POSTERIOR_LONG).abs() < 1e-9);
}

#[test]
fn worked_softmax_pair() {
    let p = crate_softmax(&[1.0, 0.0], 1.0);
    assert_eq!(format!("{:.4} {:.4}", p[0], p[1]), "0.7311 0.2689");
}
