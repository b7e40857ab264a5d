use thiserror::Error;

use crate::task::TargetId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("invalid task: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("state is terminal")]
    Terminal,
    #[error("illegal {mover} action: {detail}")]
    IllegalAction { mover: &'static str, detail: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("state space exceeds cap of {cap} states")]
    StateBlowUp { cap: usize },
    #[error("value iteration did not converge in {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("target {0} is not part of the task")]
    UnknownTarget(TargetId),
    #[error("belief expansion exceeds cap of {cap} points")]
    BeliefBlowUp { cap: usize },
    #[error("state not present in the policy")]
    MissingState,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("all posterior weights underflowed")]
    Degenerate,
}
