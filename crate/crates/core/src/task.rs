//! Task definitions and the ASCII task-file format.
//!
//! A task file is a block of `key: value` header lines, a blank line, and the
//! maze rows. `#` is a wall, `.` floor, `P` the human start, `A` the agent
//! start, and the digits `1`-`9` are evader starts (the digit is the target
//! id). The header may be omitted entirely, in which case defaults apply.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::TaskError;
use crate::grid::{Cell, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetId(pub u8);

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    A,
    B,
    #[serde(rename = "dummy")]
    Dummy,
}

impl TaskType {
    pub fn is_regular(self) -> bool {
        matches!(self, TaskType::A | TaskType::B)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            TaskType::A => "A",
            TaskType::B => "B",
            TaskType::Dummy => "dummy",
        })
    }
}

impl FromStr for TaskType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(TaskType::A),
            "B" => Ok(TaskType::B),
            "dummy" => Ok(TaskType::Dummy),
            other => Err(format!("unknown task type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    pub capture_correct: f64,
    pub capture_wrong: f64,
    /// Charged per primitive (unit) move of either pursuer.
    pub step_cost: f64,
    pub invalid_action: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Rewards {
            capture_correct: 100.0,
            capture_wrong: -100.0,
            step_cost: -1.0,
            invalid_action: -1000.0,
        }
    }
}

impl Rewards {
    /// Largest magnitude a single transition reward can reach, given the
    /// longest possible primitive path in a grid of `n_cells` cells.
    pub fn max_abs(&self, n_cells: usize) -> f64 {
        let capture = self.capture_correct.abs().max(self.capture_wrong.abs());
        capture + 2.0 * self.step_cost.abs() * n_cells as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evader {
    pub id: TargetId,
    pub start: Cell,
}

pub const DEFAULT_HORIZON: u32 = 30;
pub const DEFAULT_DISCOUNT: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub task_type: TaskType,
    pub horizon: u32,
    pub discount: f64,
    pub rewards: Rewards,
    pub grid: Grid,
    pub human_start: Cell,
    /// `None` for solo tasks where only the human moves.
    pub agent_start: Option<Cell>,
    /// Sorted by id.
    pub evaders: Vec<Evader>,
}

impl TaskSpec {
    /// The target parameter space, one target per evader, ascending.
    pub fn theta_space(&self) -> Vec<TargetId> {
        self.evaders.iter().map(|e| e.id).collect()
    }

    pub fn evader_index(&self, id: TargetId) -> Option<usize> {
        self.evaders.iter().position(|e| e.id == id)
    }

    pub fn parse(text: &str) -> Result<TaskSpec, TaskError> {
        parse_task(text)
    }

    /// Canonical task-file text; `parse(serialize(t)) == t`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            out.push_str(&format!("name: {}\n", self.name));
        }
        out.push_str(&format!("taskType: {}\n", self.task_type));
        out.push_str(&format!("horizon: {}\n", self.horizon));
        out.push_str(&format!("discount: {}\n", self.discount));
        out.push_str(&format!("captureCorrect: {}\n", self.rewards.capture_correct));
        out.push_str(&format!("captureWrong: {}\n", self.rewards.capture_wrong));
        out.push_str(&format!("stepCost: {}\n", self.rewards.step_cost));
        out.push_str(&format!("invalidAction: {}\n", self.rewards.invalid_action));
        out.push('\n');
        for r in 0..self.grid.rows() {
            for c in 0..self.grid.cols() {
                let cell = Cell::new(r, c);
                let glyph = if cell == self.human_start {
                    'P'
                } else if Some(cell) == self.agent_start {
                    'A'
                } else if let Some(e) = self.evaders.iter().find(|e| e.start == cell) {
                    char::from(b'0' + e.id.0)
                } else if self.grid.is_floor(cell) {
                    '.'
                } else {
                    '#'
                };
                out.push(glyph);
            }
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical serialization; keys caches.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<(), TaskError> {
        let invalid = |m: String| Err(TaskError::Invalid(m));
        if self.horizon < 1 {
            return invalid("horizon must be at least 1".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return invalid(format!("discount {} outside (0, 1]", self.discount));
        }
        if self.evaders.is_empty() {
            return invalid("task has no evaders".into());
        }
        if self.task_type.is_regular() && self.evaders.len() != 2 {
            return invalid(format!(
                "regular task needs exactly 2 evaders, found {}",
                self.evaders.len()
            ));
        }
        let mut starts = vec![self.human_start];
        starts.extend(self.agent_start);
        starts.extend(self.evaders.iter().map(|e| e.start));
        for (i, s) in starts.iter().enumerate() {
            if !self.grid.is_floor(*s) {
                return invalid(format!("start cell {s} is not floor"));
            }
            if starts[..i].contains(s) {
                return invalid(format!("start cell {s} is shared"));
            }
        }
        for w in self.evaders.windows(2) {
            if w[0].id >= w[1].id {
                return invalid(format!("duplicate evader id {}", w[1].id));
            }
        }
        Ok(())
    }
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> TaskError {
    TaskError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

pub fn parse_task(text: &str) -> Result<TaskSpec, TaskError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let mut name = String::new();
    let mut task_type = TaskType::Dummy;
    let mut horizon = DEFAULT_HORIZON;
    let mut discount = DEFAULT_DISCOUNT;
    let mut rewards = Rewards::default();

    let mut i = 0;
    let has_header = lines.first().is_some_and(|l| l.contains(':'));
    if has_header {
        while i < lines.len() && !lines[i].trim().is_empty() {
            let line_no = i + 1;
            let (key, value) = lines[i]
                .split_once(':')
                .ok_or_else(|| syntax(line_no, 1, "expected `key: value` header line"))?;
            let key = key.trim();
            let value = value.trim();
            let vcol = lines[i].find(':').unwrap() + 2;
            let num = |v: &str| -> Result<f64, TaskError> {
                v.parse::<f64>()
                    .map_err(|_| syntax(line_no, vcol, format!("expected a number for {key}")))
            };
            match key {
                "name" => name = value.to_string(),
                "taskType" => {
                    task_type = value.parse().map_err(|m: String| syntax(line_no, vcol, m))?
                }
                "horizon" => {
                    horizon = value
                        .parse()
                        .map_err(|_| syntax(line_no, vcol, "expected an integer horizon"))?
                }
                "discount" => discount = num(value)?,
                "captureCorrect" => rewards.capture_correct = num(value)?,
                "captureWrong" => rewards.capture_wrong = num(value)?,
                "stepCost" => rewards.step_cost = num(value)?,
                "invalidAction" => rewards.invalid_action = num(value)?,
                other => return Err(syntax(line_no, 1, format!("unknown header key {other:?}"))),
            }
            i += 1;
        }
    }
    while i < lines.len() && lines[i].trim().is_empty() {
        i += 1;
    }
    let grid_start = i;
    let mut grid_end = lines.len();
    while grid_end > grid_start && lines[grid_end - 1].trim().is_empty() {
        grid_end -= 1;
    }
    if grid_start == grid_end {
        return Err(syntax(grid_start + 1, 1, "missing maze rows"));
    }

    let rows = &lines[grid_start..grid_end];
    let width = rows[0].chars().count();
    let mut floor = Vec::with_capacity(rows.len() * width);
    let mut human = None;
    let mut agent = None;
    let mut evaders = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let line_no = grid_start + r + 1;
        let n = row.chars().count();
        if n != width {
            return Err(syntax(
                line_no,
                n.min(width) + 1,
                format!("row has {n} cells, expected {width}"),
            ));
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = Cell::new(r as u16, c as u16);
            let is_floor = match ch {
                '#' => false,
                '.' => true,
                'P' => {
                    if human.replace(cell).is_some() {
                        return Err(syntax(line_no, c + 1, "second human start"));
                    }
                    true
                }
                'A' => {
                    if agent.replace(cell).is_some() {
                        return Err(syntax(line_no, c + 1, "second agent start"));
                    }
                    true
                }
                '1'..='9' => {
                    let id = TargetId(ch as u8 - b'0');
                    if evaders.iter().any(|e: &Evader| e.id == id) {
                        return Err(syntax(line_no, c + 1, format!("duplicate evader {id}")));
                    }
                    evaders.push(Evader { id, start: cell });
                    true
                }
                other => {
                    return Err(syntax(line_no, c + 1, format!("unknown glyph {other:?}")));
                }
            };
            floor.push(is_floor);
        }
    }
    let human_start = human.ok_or_else(|| TaskError::Invalid("no human start `P`".into()))?;
    evaders.sort_by_key(|e| e.id);
    let task = TaskSpec {
        name,
        task_type,
        horizon,
        discount,
        rewards,
        grid: Grid::new(rows.len() as u16, width as u16, floor),
        human_start,
        agent_start: agent,
        evaders,
    };
    task.validate()?;
    Ok(task)
}
