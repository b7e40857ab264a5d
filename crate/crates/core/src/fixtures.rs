//! Bundled task files.
//!
//! The five regular tasks (three type A, two type B) and two dummy tasks
//! make up the experiment set. `b_near` is the type-B variant whose short
//! passage evader sits where it cannot escape. The `toy_*` mazes are small
//! enough for exhaustive oracles.

use crate::task::TaskSpec;

pub const BUILTIN: &[(&str, &str)] = &[
    ("a1", include_str!("../fixtures/a1.task")),
    ("a2", include_str!("../fixtures/a2.task")),
    ("a3", include_str!("../fixtures/a3.task")),
    ("b1", include_str!("../fixtures/b1.task")),
    ("b2", include_str!("../fixtures/b2.task")),
    ("dummy1", include_str!("../fixtures/dummy1.task")),
    ("dummy2", include_str!("../fixtures/dummy2.task")),
    ("b_near", include_str!("../fixtures/b_near.task")),
    ("toy_corridor", include_str!("../fixtures/toy_corridor.task")),
    ("toy_forced", include_str!("../fixtures/toy_forced.task")),
    ("toy_fork", include_str!("../fixtures/toy_fork.task")),
    ("toy_loop", include_str!("../fixtures/toy_loop.task")),
    ("toy_mirror", include_str!("../fixtures/toy_mirror.task")),
    ("toy_ring", include_str!("../fixtures/toy_ring.task")),
];

pub const REGULAR: [&str; 5] = ["a1", "a2", "a3", "b1", "b2"];
pub const DUMMY: [&str; 2] = ["dummy1", "dummy2"];
pub const TOY: [&str; 6] = [
    "toy_corridor",
    "toy_forced",
    "toy_fork",
    "toy_loop",
    "toy_mirror",
    "toy_ring",
];

pub fn source(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a bundled task. Panics if the bundled file is malformed, which the
/// unit tests rule out.
pub fn load(name: &str) -> Option<TaskSpec> {
    source(name).map(|s| TaskSpec::parse(s).unwrap_or_else(|e| panic!("fixture {name}: {e}")))
}

pub fn regular() -> Vec<(String, TaskSpec)> {
    REGULAR.iter().map(|n| (n.to_string(), load(n).unwrap())).collect()
}
