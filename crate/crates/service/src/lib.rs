//! Live-play session service for the collaborative pursuit tasks.
//!
//! A session walks a player through a shuffled queue of tasks, one set per
//! agent type with dummy tasks between sets. Each posted move is answered
//! by the agent through the same episode engine the batch harness uses, and
//! every transition is appended to the session's log before the reply.

pub mod api;
pub mod engine;
pub mod session;
pub mod store;

pub use api::{router, AppState};
pub use engine::Engines;
pub use session::{LogRecord, Session};
pub use store::LogStore;
