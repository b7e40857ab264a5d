mod common;

use common::*;
use pursuit_core::harness::{run_batch, run_episode, BatchConfig, BatchResult};
use pursuit_core::agent::{solve, AgentParams};
use pursuit_core::{fixtures, AgentKind, HumanParams, HumanVariant};

fn config(n_seeds: usize, seed: u64) -> BatchConfig {
    BatchConfig {
        tasks: vec![],
        agent_types: AgentKind::ALL.to_vec(),
        human_variant: HumanVariant::Tom,
        explicit_tells_human: true,
        n_seeds,
        seed,
        beta1: 1.0,
        beta2: 5.0,
        horizon: None,
        bootstrap_resamples: 500,
    }
}

fn render(r: &BatchResult) -> (Vec<u8>, Vec<u8>) {
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let logs = r
        .logs
        .iter()
        .map(|l| serde_json::to_string(l).unwrap() + "\n")
        .collect::<String>();
    (logs.into_bytes(), csv)
}

fn run_with_threads(threads: usize, cfg: &BatchConfig) -> (Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let tasks = fixtures::regular();
    pool.install(|| render(&run_batch(cfg, &tasks).unwrap()))
}

#[test]
fn batch_output_is_independent_of_thread_count() {
    let cfg = config(12, 42);
    let one = run_with_threads(1, &cfg);
    let four = run_with_threads(4, &cfg);
    let again = run_with_threads(3, &cfg);
    assert_eq!(one, four);
    assert_eq!(one, again);
}

#[test]
fn different_seeds_give_different_logs() {
    let a = run_with_threads(2, &config(12, 1));
    let b = run_with_threads(2, &config(12, 2));
    assert_ne!(a.0, b.0);
}

#[test]
fn episode_replays_identically() {
    let t = tables(task("b1"));
    let human = HumanParams::default();
    for kind in AgentKind::ALL {
        let policy = solve(&t, kind, &AgentParams::default()).unwrap();
        for seed in 0..10 {
            let x = run_episode(&t, &policy, "b1", human, seed, None).unwrap();
            let y = run_episode(&t, &policy, "b1", human, seed, None).unwrap();
            assert_eq!(
                serde_json::to_string(&x).unwrap(),
                serde_json::to_string(&y).unwrap()
            );
        }
    }
}

#[test]
fn log_roundtrips_through_json() {
    let t = tables(task("a1"));
    let policy = solve(&t, AgentKind::Implicit, &AgentParams::default()).unwrap();
    let log = run_episode(&t, &policy, "a1", HumanParams::default(), 9, None).unwrap();
    let text = serde_json::to_string(&log).unwrap();
    let back: pursuit_core::harness::EpisodeLog = serde_json::from_str(&text).unwrap();
    assert_eq!(back, log);
}

#[test]
fn told_human_with_explicit_agent_captures_best_target() {
    let cfg = config(20, 5);
    let result = run_batch(&cfg, &fixtures::regular()).unwrap();
    for name in fixtures::REGULAR {
        let row = result.row(name, AgentKind::Explicit).unwrap();
        assert_eq!(row.human_variant, HumanVariant::Told);
        assert_eq!(row.best_capture_rate, 1.0, "{name}");
    }
}
