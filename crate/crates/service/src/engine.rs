//! Solved tasks shared by every session.

use std::path::Path;

use pursuit_core::harness::{prepare, HarnessError, PreparedTask};
use pursuit_core::{fixtures, AgentKind, AgentParams, AgentPolicy, TaskSpec, TaskType};

pub struct TaskEngine {
    pub prepared: PreparedTask,
}

impl TaskEngine {
    pub fn id(&self) -> &str {
        &self.prepared.id
    }

    pub fn task(&self) -> &TaskSpec {
        self.prepared.tables.task()
    }

    pub fn is_dummy(&self) -> bool {
        self.task().task_type == TaskType::Dummy
    }

    pub fn policy(&self, kind: AgentKind) -> &AgentPolicy {
        let i = AgentKind::ALL.iter().position(|k| *k == kind).unwrap();
        &self.prepared.policies[i]
    }
}

/// Every task with its value tables and one policy per agent type, in id
/// order.
pub struct Engines {
    tasks: Vec<TaskEngine>,
}

impl Engines {
    /// Solves every task for all three agent types.
    pub fn build(tasks: Vec<(String, TaskSpec)>, params: &AgentParams) -> Result<Self, HarnessError> {
        let mut tasks = std::thread::scope(|scope| {
            let handles: Vec<_> = tasks
                .into_iter()
                .map(|(id, t)| scope.spawn(move || prepare(&id, t, &AgentKind::ALL, params, None)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?;
        tasks.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Engines {
            tasks: tasks.into_iter().map(|prepared| TaskEngine { prepared }).collect(),
        })
    }

    /// The bundled experiment set: five regular tasks and two dummies.
    pub fn builtin_tasks() -> Vec<(String, TaskSpec)> {
        fixtures::REGULAR
            .iter()
            .chain(&fixtures::DUMMY)
            .map(|n| (n.to_string(), fixtures::load(n).unwrap()))
            .collect()
    }

    /// Every `*.task` file in `dir`, keyed by file stem.
    pub fn tasks_from_dir(dir: &Path) -> Result<Vec<(String, TaskSpec)>, HarnessError> {
        let entries = std::fs::read_dir(dir).map_err(|source| HarnessError::Read {
            path: dir.display().to_string(),
            source,
        })?;
        let mut out = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "task") {
                let text = std::fs::read_to_string(&path).map_err(|source| HarnessError::Read {
                    path: path.display().to_string(),
                    source,
                })?;
                let task = TaskSpec::parse(&text).map_err(|source| HarnessError::Task {
                    path: path.display().to_string(),
                    source,
                })?;
                let id = path.file_stem().unwrap().to_string_lossy().into_owned();
                out.push((id, task));
            }
        }
        if !out.iter().any(|(_, t)| t.task_type.is_regular()) {
            return Err(HarnessError::Config(format!(
                "{} holds no type A or B task",
                dir.display()
            )));
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Option<&TaskEngine> {
        self.tasks.iter().find(|t| t.id() == id)
    }

    pub fn all(&self) -> &[TaskEngine] {
        &self.tasks
    }

    pub fn regular_ids(&self) -> Vec<String> {
        self.tasks
            .iter()
            .filter(|t| !t.is_dummy())
            .map(|t| t.id().to_string())
            .collect()
    }

    pub fn dummy_ids(&self) -> Vec<String> {
        self.tasks
            .iter()
            .filter(|t| t.is_dummy())
            .map(|t| t.id().to_string())
            .collect()
    }
}
