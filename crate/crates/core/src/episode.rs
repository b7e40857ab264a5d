//! The step loop shared by the batch harness and the live service.

use serde::{Deserialize, Serialize};

use crate::agent::{AgentPolicy, AgentState};
use crate::env::{CompressedAction, ObservableState, PhaseEvent};
use crate::error::PlanError;
use crate::grid::Dir;
use crate::human::Belief;
use crate::planning::Tables;
use crate::task::TargetId;

/// What one step did, as logged and as returned to a live player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepRecord {
    pub step_index: u32,
    /// Observable state the step started from.
    pub state: ObservableState,
    pub agent_action: CompressedAction,
    pub human_action: CompressedAction,
    /// The simulated human's target belief after it watched the agent.
    /// Absent for live players.
    pub human_belief: Option<Belief>,
    /// Agent belief after this step's update.
    pub agent_belief: Belief,
    /// Step reward measured against the best target.
    pub reward: f64,
    pub captured: Option<TargetId>,
    pub events: Vec<PhaseEvent>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum EpisodeOutcome {
    Captured { id: TargetId },
    /// Horizon reached, or the human walked into a dead end.
    Timeout,
}

/// A live episode: the graph state index plus the agent's belief.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    tables: &'a Tables,
    state: usize,
    agent: AgentState<'a>,
    step: u32,
}

impl<'a> Episode<'a> {
    pub fn new(tables: &'a Tables, policy: &'a AgentPolicy) -> Self {
        Episode {
            tables,
            state: crate::planning::StateGraph::ROOT,
            agent: AgentState::new(policy),
            step: 0,
        }
    }

    /// Rebuilds an episode from the parts a caller kept between steps.
    pub fn resume(
        tables: &'a Tables,
        policy: &'a AgentPolicy,
        state: usize,
        belief: Belief,
        step: u32,
    ) -> Self {
        Episode {
            tables,
            state,
            agent: AgentState { belief, policy },
            step,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    pub fn tables(&self) -> &'a Tables {
        self.tables
    }

    pub fn state_index(&self) -> usize {
        self.state
    }

    pub fn observable(&self) -> &'a ObservableState {
        &self.tables.graph.states[self.state]
    }

    pub fn agent_belief(&self) -> &Belief {
        &self.agent.belief
    }

    pub fn is_terminal(&self) -> bool {
        self.tables.graph.nodes[self.state].is_terminal()
    }

    pub fn outcome(&self) -> Option<EpisodeOutcome> {
        if !self.is_terminal() {
            return None;
        }
        Some(match self.observable().captured {
            Some(id) => EpisodeOutcome::Captured { id },
            None => EpisodeOutcome::Timeout,
        })
    }

    pub fn human_actions(&self) -> &'a [CompressedAction] {
        &self.tables.graph.nodes[self.state].human_actions
    }

    /// Index of the human action whose first unit move is `d`.
    pub fn human_action_by_first_move(&self, d: Dir) -> Option<usize> {
        self.human_actions()
            .iter()
            .position(|a| a.first_move() == Some(d))
    }

    pub fn agent_actions(&self) -> &'a [CompressedAction] {
        &self.tables.graph.nodes[self.state].agent_actions
    }

    /// The agent's choice for the current state (index into `agent_actions`).
    pub fn agent_choice(&self) -> Result<usize, PlanError> {
        self.agent.select_action(self.state)
    }

    /// Applies one joint step and updates the agent's belief.
    pub fn advance(
        &mut self,
        agent_action: usize,
        human_action: usize,
        human_belief: Option<Belief>,
        warnings: &mut Vec<String>,
    ) -> Result<StepRecord, PlanError> {
        if self.is_terminal() {
            return Err(crate::error::EnvError::Terminal.into());
        }
        let graph = &self.tables.graph;
        let node = &graph.nodes[self.state];
        let start = graph.states[self.state].clone();
        let agent_act = node.agent_actions[agent_action].clone();
        let human_act = node.human_actions[human_action].clone();
        let transition = self.tables.env.step(&start, &human_act, &agent_act)?;
        let next = node.outcome(agent_action, human_action).next;
        debug_assert_eq!(graph.states[next], transition.next);

        let (agent, warning) =
            self.agent
                .update_belief(self.tables, self.state, agent_action, human_action);
        warnings.extend(warning);
        self.agent = agent;

        let theta_star = self.tables.best_target();
        let record = StepRecord {
            step_index: self.step,
            state: start,
            agent_action: agent_act,
            human_action: human_act,
            human_belief,
            agent_belief: self.agent.belief.clone(),
            reward: transition.reward(theta_star, &self.tables.task().rewards),
            captured: transition.captured,
            events: transition.events,
            terminal: graph.nodes[next].is_terminal(),
        };
        self.state = next;
        self.step += 1;
        Ok(record)
    }
}
