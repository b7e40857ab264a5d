//! Session state machine: task queue, live episode, surveys and the log
//! records each transition produces. Pure and synchronous; the HTTP layer
//! only adds locking and persistence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use pursuit_core::env::PhaseEvent;
use pursuit_core::episode::{Episode, EpisodeOutcome, StepRecord};
use pursuit_core::planning::StateGraph;
use pursuit_core::{AgentKind, Belief, Cell, CompressedAction, Dir, PlanError, TargetId};

use crate::engine::Engines;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueueEntry {
    pub task_id: String,
    pub agent_type: AgentKind,
    pub dummy: bool,
    /// Index of the agent-type set, `None` for dummies.
    pub set: Option<usize>,
}

/// One set per agent type in shuffled order, tasks shuffled within each
/// set, and a dummy after each of the first sets while dummies last. A
/// dummy is played with the agent type of the set before it.
pub fn build_queue(seed: u64, regular: &[String], dummies: &[String]) -> Vec<QueueEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds = AgentKind::ALL;
    kinds.shuffle(&mut rng);
    let mut queue = Vec::new();
    for (set, kind) in kinds.into_iter().enumerate() {
        let mut tasks = regular.to_vec();
        tasks.shuffle(&mut rng);
        queue.extend(tasks.into_iter().map(|task_id| QueueEntry {
            task_id,
            agent_type: kind,
            dummy: false,
            set: Some(set),
        }));
        if set + 1 < kinds.len() {
            if let Some(d) = dummies.get(set) {
                queue.push(QueueEntry {
                    task_id: d.clone(),
                    agent_type: kind,
                    dummy: true,
                    set: None,
                });
            }
        }
    }
    queue
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Live {
    pub state: usize,
    pub belief: Belief,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskResult {
    pub position: usize,
    pub task_id: String,
    pub outcome: EpisodeOutcome,
    pub captured_best: bool,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurveyRecord {
    pub agent_type: AgentKind,
    pub set: usize,
    /// Ease of collaboration, initiative, target findability, intention
    /// inference; each on a 1 to 7 scale.
    pub items: [u8; 4],
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum LogRecord {
    #[serde(rename_all = "camelCase")]
    Session {
        session_id: String,
        seed: u64,
        created_at: u64,
        queue: Vec<QueueEntry>,
    },
    #[serde(rename_all = "camelCase")]
    TaskStart {
        position: usize,
        task_id: String,
        agent_type: AgentKind,
        content_hash: String,
    },
    #[serde(rename_all = "camelCase")]
    Step {
        position: usize,
        direction: Dir,
        agent_action: usize,
        human_action: usize,
        record: StepRecord,
    },
    TaskEnd(TaskResult),
    Survey(SurveyRecord),
}

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("session is finished")]
    Finished,
    #[error("episode is already over")]
    Terminal,
    #[error("illegal move {0}; legal moves are {1:?}")]
    IllegalMove(Dir, Vec<Dir>),
    #[error("survey items must be four integers from 1 to 7")]
    InvalidSurvey,
    #[error("a survey for this set was already recorded")]
    DuplicateSurvey,
    #[error("no task set has been completed yet")]
    NoCompletedSet,
    #[error("task {0} is not loaded")]
    UnknownTask(String),
    #[error("log does not match the engine: {0}")]
    Replay(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaderView {
    pub id: TargetId,
    pub cell: Cell,
}

/// What the player sees of the current task. The agent type is withheld;
/// only the explicit condition carries the highlighted target.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeView {
    pub task_id: String,
    pub dummy: bool,
    /// Rows of `#` (wall) and `.` (floor).
    pub grid: Vec<String>,
    pub human: Cell,
    pub agent: Option<Cell>,
    pub evaders: Vec<EvaderView>,
    pub step: u32,
    pub horizon: u32,
    pub remaining_steps: u32,
    pub legal_moves: Vec<Dir>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub highlighted_target: Option<TargetId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StateView {
    pub session_id: String,
    pub status: &'static str,
    pub queue_position: usize,
    pub queue_length: usize,
    /// Set whose survey is due, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survey_due: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeView>,
}

/// Reply to a move: the joint step that followed it and the state after.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepResult {
    pub step_index: u32,
    pub human_action: CompressedAction,
    pub agent_action: CompressedAction,
    pub events: Vec<PhaseEvent>,
    pub captured: Option<TargetId>,
    pub terminal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<EpisodeOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub captured_best: Option<bool>,
    pub state: StateView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    pub created_at: u64,
    pub queue: Vec<QueueEntry>,
    pub position: usize,
    pub live: Option<Live>,
    pub results: Vec<TaskResult>,
    pub surveys: Vec<SurveyRecord>,
}

impl Session {
    /// A new session and the log records announcing it.
    pub fn create(
        engines: &Engines,
        id: String,
        seed: u64,
        created_at: u64,
    ) -> (Session, Vec<LogRecord>) {
        let queue = build_queue(seed, &engines.regular_ids(), &engines.dummy_ids());
        let mut s = Session {
            id: id.clone(),
            seed,
            created_at,
            queue: queue.clone(),
            position: 0,
            live: None,
            results: Vec::new(),
            surveys: Vec::new(),
        };
        let mut records = vec![LogRecord::Session {
            session_id: id,
            seed,
            created_at,
            queue,
        }];
        records.extend(s.start_task(engines));
        (s, records)
    }

    pub fn is_finished(&self) -> bool {
        self.position >= self.queue.len()
    }

    fn start_task(&mut self, engines: &Engines) -> Option<LogRecord> {
        let entry = self.queue.get(self.position)?;
        let engine = engines.get(&entry.task_id)?;
        let policy = engine.policy(entry.agent_type);
        self.live = Some(Live {
            state: StateGraph::ROOT,
            belief: policy.initial_belief(),
            step: 0,
        });
        Some(LogRecord::TaskStart {
            position: self.position,
            task_id: entry.task_id.clone(),
            agent_type: entry.agent_type,
            content_hash: engine.task().content_hash(),
        })
    }

    /// Sets that are fully played, in queue order.
    fn completed_sets(&self) -> Vec<(usize, AgentKind)> {
        let mut out: Vec<(usize, AgentKind)> = Vec::new();
        for (i, e) in self.queue.iter().enumerate() {
            if let Some(set) = e.set {
                let done = self
                    .queue
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.set == Some(set))
                    .all(|(j, _)| j < self.position);
                if done && !out.iter().any(|(s, _)| *s == set) && i < self.position {
                    out.push((set, e.agent_type));
                }
            }
        }
        out
    }

    pub fn survey_due(&self) -> Option<(usize, AgentKind)> {
        self.completed_sets()
            .into_iter()
            .find(|(set, _)| !self.surveys.iter().any(|s| s.set == *set))
    }

    pub fn view(&self, engines: &Engines) -> StateView {
        StateView {
            session_id: self.id.clone(),
            status: if self.is_finished() { "finished" } else { "active" },
            queue_position: self.position,
            queue_length: self.queue.len(),
            survey_due: self.survey_due().map(|(set, _)| set),
            episode: self.episode_view(engines),
        }
    }

    fn episode_view(&self, engines: &Engines) -> Option<EpisodeView> {
        let entry = self.queue.get(self.position)?;
        let live = self.live.as_ref()?;
        let engine = engines.get(&entry.task_id)?;
        let tables = &engine.prepared.tables;
        let task = tables.task();
        let state = &tables.graph.states[live.state];
        let grid = (0..task.grid.rows())
            .map(|r| {
                (0..task.grid.cols())
                    .map(|c| if task.grid.is_floor(Cell::new(r, c)) { '.' } else { '#' })
                    .collect()
            })
            .collect();
        let highlighted_target =
            (entry.agent_type == AgentKind::Explicit).then(|| tables.best_target());
        Some(EpisodeView {
            task_id: entry.task_id.clone(),
            dummy: entry.dummy,
            grid,
            human: state.human.pos,
            agent: state.agent.as_ref().map(|a| a.pos),
            evaders: task
                .evaders
                .iter()
                .zip(&state.evaders)
                .map(|(e, c)| EvaderView { id: e.id, cell: *c })
                .collect(),
            step: live.step,
            horizon: task.horizon,
            remaining_steps: task.horizon.saturating_sub(live.step),
            legal_moves: tables.env.legal_moves(state, pursuit_core::Mover::Human),
            highlighted_target,
        })
    }

    /// Plays the player's move and the agent's answer. On success the
    /// session is updated and the log records to persist are returned.
    pub fn apply_move(
        &mut self,
        engines: &Engines,
        direction: Dir,
    ) -> Result<(StepResult, Vec<LogRecord>), SessionError> {
        if self.is_finished() {
            return Err(SessionError::Finished);
        }
        let entry = self.queue[self.position].clone();
        let engine = engines
            .get(&entry.task_id)
            .ok_or_else(|| SessionError::UnknownTask(entry.task_id.clone()))?;
        let tables = &engine.prepared.tables;
        let policy = engine.policy(entry.agent_type);
        let live = self.live.clone().ok_or(SessionError::Terminal)?;
        let mut episode = Episode::resume(tables, policy, live.state, live.belief, live.step);
        if episode.is_terminal() {
            return Err(SessionError::Terminal);
        }
        let human = episode.human_action_by_first_move(direction).ok_or_else(|| {
            SessionError::IllegalMove(
                direction,
                tables.env.legal_moves(episode.observable(), pursuit_core::Mover::Human),
            )
        })?;
        let agent = episode.agent_choice()?;
        let mut warnings = Vec::new();
        let record = episode.advance(agent, human, None, &mut warnings)?;

        let mut records = vec![LogRecord::Step {
            position: self.position,
            direction,
            agent_action: agent,
            human_action: human,
            record: record.clone(),
        }];
        let (mut outcome, mut captured_best) = (None, None);
        if let Some(o) = episode.outcome() {
            let best = o == (EpisodeOutcome::Captured { id: tables.best_target() });
            let result = TaskResult {
                position: self.position,
                task_id: entry.task_id.clone(),
                outcome: o,
                captured_best: best,
                steps: episode.step_count(),
            };
            self.results.push(result.clone());
            records.push(LogRecord::TaskEnd(result));
            outcome = Some(o);
            captured_best = Some(best);
            self.position += 1;
            self.live = None;
            records.extend(self.start_task(engines));
        } else {
            self.live = Some(Live {
                state: episode.state_index(),
                belief: episode.agent_belief().clone(),
                step: episode.step_count(),
            });
        }
        let result = StepResult {
            step_index: record.step_index,
            human_action: record.human_action,
            agent_action: record.agent_action,
            events: record.events,
            captured: record.captured,
            terminal: record.terminal,
            outcome,
            captured_best,
            state: self.view(engines),
        };
        Ok((result, records))
    }

    pub fn submit_survey(&mut self, items: &[i64]) -> Result<(SurveyRecord, Vec<LogRecord>), SessionError> {
        if items.len() != 4 || items.iter().any(|x| !(1..=7).contains(x)) {
            return Err(SessionError::InvalidSurvey);
        }
        let Some((set, agent_type)) = self.survey_due() else {
            return Err(if self.completed_sets().is_empty() {
                SessionError::NoCompletedSet
            } else {
                SessionError::DuplicateSurvey
            });
        };
        let mut arr = [0u8; 4];
        for (a, x) in arr.iter_mut().zip(items) {
            *a = *x as u8;
        }
        let rec = SurveyRecord {
            agent_type,
            set,
            items: arr,
        };
        self.surveys.push(rec.clone());
        Ok((rec.clone(), vec![LogRecord::Survey(rec)]))
    }

    /// Rebuilds a session from its log by replaying every move through the
    /// engine, checking each regenerated record against the logged one.
    pub fn recover(engines: &Engines, records: &[LogRecord]) -> Result<Session, SessionError> {
        let Some(LogRecord::Session {
            session_id,
            seed,
            created_at,
            queue,
        }) = records.first()
        else {
            return Err(SessionError::Replay("log does not start with a session record".into()));
        };
        let (mut s, _) = Session::create(engines, session_id.clone(), *seed, *created_at);
        if s.queue != *queue {
            return Err(SessionError::Replay("task queue differs".into()));
        }
        for r in &records[1..] {
            match r {
                LogRecord::Step {
                    direction, record, ..
                } => {
                    let (_, produced) = s.apply_move(engines, *direction)?;
                    match produced.first() {
                        Some(LogRecord::Step { record: again, .. }) if again == record => {}
                        _ => return Err(SessionError::Replay(format!("step {} differs", record.step_index))),
                    }
                }
                LogRecord::Survey(rec) => {
                    let items: Vec<i64> = rec.items.iter().map(|x| *x as i64).collect();
                    let (again, _) = s.submit_survey(&items)?;
                    if again != *rec {
                        return Err(SessionError::Replay("survey differs".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(s)
    }
}

/// The step records of one queue position, in order, from a session log.
pub fn steps_at(records: &[LogRecord], position: usize) -> Vec<(Dir, &StepRecord)> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step {
                position: p,
                direction,
                record,
                ..
            } if *p == position => Some((*direction, record)),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn queue_shape() {
        let q = build_queue(3, &ids("t", 5), &ids("d", 2));
        assert_eq!(q.len(), 17);
        assert!(q[5].dummy && q[11].dummy);
        for kind in AgentKind::ALL {
            assert_eq!(q.iter().filter(|e| !e.dummy && e.agent_type == kind).count(), 5);
        }
        assert_eq!(q[5].agent_type, q[4].agent_type);
        assert_eq!(q, build_queue(3, &ids("t", 5), &ids("d", 2)));
    }

    #[test]
    fn seeds_change_order() {
        let qs: Vec<_> = (0..8).map(|s| build_queue(s, &ids("t", 5), &ids("d", 2))).collect();
        assert!(qs.iter().any(|q| *q != qs[0]));
    }
}
