//! Pursuit-evasion dynamics.
//!
//! One decision epoch is a pair of compressed actions. The human walks its
//! corridor first and every evader answers each human unit move with one
//! unit move of its own; the agent then walks its corridor while the evaders
//! stand still. Capture is checked after every unit move and once more after
//! the agent has finished.

use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::grid::{Cell, CellSet, Dir, DistanceTable};
use crate::task::{Rewards, TargetId, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mover {
    Human,
    Agent,
}

impl Mover {
    fn label(self) -> &'static str {
        match self {
            Mover::Human => "human",
            Mover::Agent => "agent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoverState {
    pub pos: Cell,
    /// Direction of the move that entered `pos`; its reverse is forbidden.
    pub entry: Option<Dir>,
    pub visited: CellSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservableState {
    pub human: MoverState,
    pub agent: Option<MoverState>,
    /// Evader cells, aligned with `TaskSpec::evaders`.
    pub evaders: Vec<Cell>,
    pub captured: Option<TargetId>,
    pub step: u32,
}

impl ObservableState {
    pub fn mover(&self, m: Mover) -> Option<&MoverState> {
        match m {
            Mover::Human => Some(&self.human),
            Mover::Agent => self.agent.as_ref(),
        }
    }

    fn mover_mut(&mut self, m: Mover) -> &mut MoverState {
        match m {
            Mover::Human => &mut self.human,
            Mover::Agent => self.agent.as_mut().expect("agent present"),
        }
    }

    fn pursuer_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        std::iter::once(self.human.pos).chain(self.agent.as_ref().map(|a| a.pos))
    }
}

/// A maximal corridor walk. An empty `moves` list is the agent's "stay",
/// used only when the agent has no legal unit move.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressedAction {
    pub mover: Mover,
    pub moves: Vec<Dir>,
    pub destination: Cell,
}

impl CompressedAction {
    pub fn n_steps(&self) -> usize {
        self.moves.len()
    }

    pub fn is_stay(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn first_move(&self) -> Option<Dir> {
        self.moves.first().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaderMove {
    Move(Dir),
    Captured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum PhaseEvent {
    HumanMove { to: Cell },
    EvaderMove { id: TargetId, to: Cell },
    AgentMove { to: Cell },
    Capture { id: TargetId, cell: Cell },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: ObservableState,
    pub human_steps: u32,
    pub agent_steps: u32,
    /// Capture that happened during this step, if any.
    pub captured: Option<TargetId>,
    pub events: Vec<PhaseEvent>,
}

impl Transition {
    pub fn primitive_steps(&self) -> u32 {
        self.human_steps + self.agent_steps
    }

    /// Reward of this step when the human aims for `theta`.
    pub fn reward(&self, theta: TargetId, rewards: &Rewards) -> f64 {
        transition_reward(self.primitive_steps(), self.captured, theta, rewards)
    }
}

pub fn transition_reward(
    primitive_steps: u32,
    captured: Option<TargetId>,
    theta: TargetId,
    rewards: &Rewards,
) -> f64 {
    let capture = match captured {
        Some(id) if id == theta => rewards.capture_correct,
        Some(_) => rewards.capture_wrong,
        None => 0.0,
    };
    rewards.step_cost * primitive_steps as f64 + capture
}

/// The environment: an immutable task plus precomputed distances.
#[derive(Debug, Clone)]
pub struct Env {
    task: TaskSpec,
    dist: DistanceTable,
}

impl Env {
    pub fn new(task: TaskSpec) -> Self {
        let dist = DistanceTable::new(&task.grid);
        Env { task, dist }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn initial_state(&self) -> ObservableState {
        let n = self.task.grid.n_cells();
        let start = |c: Cell| {
            let mut visited = CellSet::with_capacity(n);
            visited.insert(self.task.grid.index(c));
            MoverState {
                pos: c,
                entry: None,
                visited,
            }
        };
        ObservableState {
            human: start(self.task.human_start),
            agent: self.task.agent_start.map(start),
            evaders: self.task.evaders.iter().map(|e| e.start).collect(),
            captured: None,
            step: 0,
        }
    }

    pub fn is_terminal(&self, s: &ObservableState) -> bool {
        s.captured.is_some()
            || s.step >= self.task.horizon
            || self.legal_moves(s, Mover::Human).is_empty()
    }

    /// Unit moves into floor cells that neither reverse the entry direction
    /// nor re-enter a visited cell.
    pub fn legal_moves(&self, s: &ObservableState, mover: Mover) -> Vec<Dir> {
        match s.mover(mover) {
            Some(m) => self.legal_from(m),
            None => Vec::new(),
        }
    }

    fn legal_from(&self, m: &MoverState) -> Vec<Dir> {
        let grid = &self.task.grid;
        grid.floor_neighbors(m.pos)
            .filter(|(d, n)| {
                Some(d.reverse()) != m.entry && !m.visited.contains(grid.index(*n))
            })
            .map(|(d, _)| d)
            .collect()
    }

    /// One compressed action per legal first move, extended through
    /// single-continuation cells until a junction, a dead end or an evader.
    pub fn compress_actions(&self, s: &ObservableState, mover: Mover) -> Vec<CompressedAction> {
        let Some(start) = s.mover(mover) else {
            return Vec::new();
        };
        let grid = &self.task.grid;
        self.legal_from(start)
            .into_iter()
            .map(|first| {
                let mut m = start.clone();
                let mut moves = Vec::new();
                let mut d = first;
                loop {
                    let next = grid.neighbor(m.pos, d).expect("legal move");
                    m.pos = next;
                    m.entry = Some(d);
                    m.visited.insert(grid.index(next));
                    moves.push(d);
                    if s.evaders.contains(&next) {
                        break;
                    }
                    match self.legal_from(&m).as_slice() {
                        [only] => d = *only,
                        _ => break,
                    }
                }
                CompressedAction {
                    mover,
                    moves,
                    destination: m.pos,
                }
            })
            .collect()
    }

    /// The actions a mover may choose from: its compressed actions, or a
    /// single stay when the agent is stuck or absent.
    pub fn available_actions(&self, s: &ObservableState, mover: Mover) -> Vec<CompressedAction> {
        let mut acts = self.compress_actions(s, mover);
        if acts.is_empty() && mover == Mover::Agent {
            let pos = s.agent.as_ref().map_or(s.human.pos, |a| a.pos);
            acts.push(CompressedAction {
                mover,
                moves: Vec::new(),
                destination: pos,
            });
        }
        acts
    }

    /// Greedy flight: the adjacent free cell maximizing the distance to the
    /// nearest pursuer, ties broken up, right, down, left.
    pub fn evader_move(&self, s: &ObservableState, evader: usize) -> EvaderMove {
        let grid = &self.task.grid;
        let here = s.evaders[evader];
        let pursuers: Vec<usize> = s.pursuer_cells().map(|c| grid.index(c)).collect();
        let mut best: Option<(u32, Dir)> = None;
        for (d, n) in grid.floor_neighbors(here) {
            if s.pursuer_cells().any(|p| p == n) {
                continue;
            }
            let ni = grid.index(n);
            let score = pursuers
                .iter()
                .map(|&p| self.dist.get(p, ni))
                .min()
                .unwrap_or(u32::MAX);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, d));
            }
        }
        match best {
            Some((_, d)) => EvaderMove::Move(d),
            None => EvaderMove::Captured,
        }
    }

    fn evader_at(&self, s: &ObservableState, c: Cell) -> Option<TargetId> {
        s.evaders
            .iter()
            .position(|&e| e == c)
            .map(|i| self.task.evaders[i].id)
    }

    /// Validated step: both actions must come from `available_actions(s)`.
    pub fn step(
        &self,
        s: &ObservableState,
        human: &CompressedAction,
        agent: &CompressedAction,
    ) -> Result<Transition, EnvError> {
        if self.is_terminal(s) {
            return Err(EnvError::Terminal);
        }
        for (mover, action) in [(Mover::Human, human), (Mover::Agent, agent)] {
            if action.mover != mover {
                return Err(EnvError::IllegalAction {
                    mover: mover.label(),
                    detail: "action belongs to the other mover".into(),
                });
            }
            if !self.available_actions(s, mover).contains(action) {
                return Err(EnvError::IllegalAction {
                    mover: mover.label(),
                    detail: format!("{:?} is not a legal compressed action", action.moves),
                });
            }
        }
        Ok(self.apply(s, human, agent))
    }

    /// Step without validation; callers guarantee legality.
    pub(crate) fn apply(
        &self,
        s: &ObservableState,
        human: &CompressedAction,
        agent: &CompressedAction,
    ) -> Transition {
        let grid = &self.task.grid;
        let mut n = s.clone();
        let mut events = Vec::new();
        let mut human_steps = 0;
        let mut agent_steps = 0;
        let mut captured = None;

        'human: for &d in &human.moves {
            let m = n.mover_mut(Mover::Human);
            let to = grid.neighbor(m.pos, d).expect("legal human move");
            m.pos = to;
            m.entry = Some(d);
            m.visited.insert(grid.index(to));
            human_steps += 1;
            events.push(PhaseEvent::HumanMove { to });
            if let Some(id) = self.evader_at(&n, to) {
                captured = Some(id);
                events.push(PhaseEvent::Capture { id, cell: to });
                break;
            }
            for i in 0..n.evaders.len() {
                let id = self.task.evaders[i].id;
                match self.evader_move(&n, i) {
                    EvaderMove::Move(ed) => {
                        let to = grid.neighbor(n.evaders[i], ed).expect("floor");
                        n.evaders[i] = to;
                        events.push(PhaseEvent::EvaderMove { id, to });
                    }
                    EvaderMove::Captured => {
                        captured = Some(id);
                        events.push(PhaseEvent::Capture {
                            id,
                            cell: n.evaders[i],
                        });
                        break 'human;
                    }
                }
            }
        }

        if captured.is_none() {
            for &d in &agent.moves {
                let m = n.mover_mut(Mover::Agent);
                let to = grid.neighbor(m.pos, d).expect("legal agent move");
                m.pos = to;
                m.entry = Some(d);
                m.visited.insert(grid.index(to));
                agent_steps += 1;
                events.push(PhaseEvent::AgentMove { to });
                if let Some(id) = self.evader_at(&n, to) {
                    captured = Some(id);
                    events.push(PhaseEvent::Capture { id, cell: to });
                    break;
                }
            }
        }

        if captured.is_none() {
            for i in 0..n.evaders.len() {
                if self.evader_move(&n, i) == EvaderMove::Captured {
                    let id = self.task.evaders[i].id;
                    captured = Some(id);
                    events.push(PhaseEvent::Capture {
                        id,
                        cell: n.evaders[i],
                    });
                    break;
                }
            }
        }

        n.captured = captured;
        n.step += 1;
        Transition {
            next: n,
            human_steps,
            agent_steps,
            captured,
            events,
        }
    }

    /// Index into `available_actions(s, mover)` of the action whose first
    /// unit move is `d`.
    pub fn action_by_first_move(
        &self,
        s: &ObservableState,
        mover: Mover,
        d: Dir,
    ) -> Option<CompressedAction> {
        self.compress_actions(s, mover)
            .into_iter()
            .find(|a| a.first_move() == Some(d))
    }
}
