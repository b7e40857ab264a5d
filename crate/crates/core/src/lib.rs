//! Collaborative pursuit-evasion with guidance agents.
//!
//! A human and an agent chase fleeing evaders through a maze. The agent does
//! not know which evader the human is after; it plans over that hidden target
//! with one of three models of how the human picks it:
//!
//! * supportive: the human never changes target,
//! * explicit: the human has been told the best target,
//! * implicit: the human infers the agent's target from its moves and adopts it.
//!
//! Modules, bottom up: [`grid`] and [`task`] describe mazes, [`env`] runs the
//! dynamics, [`planning`] solves the joint MDP for a fixed target, [`human`]
//! holds the Boltzmann human and its theory-of-mind inference, [`agent`] the
//! belief-space policies, [`episode`] the shared step loop, and [`harness`]
//! the batch experiments.

pub mod agent;
pub mod cache;
pub mod episode;
pub mod error;
pub mod env;
pub mod fixtures;
pub mod grid;
pub mod harness;
pub mod human;
pub mod planning;
pub mod task;

pub use agent::{AgentKind, AgentParams, AgentPolicy, AgentState};
pub use env::{CompressedAction, Env, Mover, ObservableState};
pub use error::{BeliefError, EnvError, PlanError, TaskError};
pub use grid::{Cell, Dir, Grid};
pub use human::{Belief, HumanParams, HumanVariant, SimulatedHuman};
pub use planning::{PlanningConfig, Tables, ValueTable};
pub use task::{TargetId, TaskSpec, TaskType};
