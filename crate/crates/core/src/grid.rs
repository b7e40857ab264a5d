//! Maze geometry: cells, directions, the wall map and shortest-path distances.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A unit move on the grid. The declaration order is the tie-break order
/// used everywhere (up, right, down, left).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    Up,
    Right,
    Down,
    Left,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Right, Dir::Down, Dir::Left];

    pub fn reverse(self) -> Dir {
        match self {
            Dir::Up => Dir::Down,
            Dir::Right => Dir::Left,
            Dir::Down => Dir::Up,
            Dir::Left => Dir::Right,
        }
    }

    fn delta(self) -> (i32, i32) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Right => (0, 1),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
        }
    }

    pub fn parse(s: &str) -> Option<Dir> {
        match s.to_ascii_lowercase().as_str() {
            "up" | "u" => Some(Dir::Up),
            "right" | "r" => Some(Dir::Right),
            "down" | "d" => Some(Dir::Down),
            "left" | "l" => Some(Dir::Left),
            _ => None,
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dir::Up => "up",
            Dir::Right => "right",
            Dir::Down => "down",
            Dir::Left => "left",
        };
        f.pad(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u16,
    pub col: u16,
}

impl Cell {
    pub fn new(row: u16, col: u16) -> Self {
        Cell { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Fixed-capacity bitset over the cells of one grid. Serialized as the
/// sorted list of member cell indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "CellSetRepr", try_from = "CellSetRepr")]
pub struct CellSet {
    words: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct CellSetRepr {
    capacity: usize,
    cells: Vec<usize>,
}

impl From<CellSet> for CellSetRepr {
    fn from(s: CellSet) -> Self {
        CellSetRepr {
            capacity: s.words.len() * 64,
            cells: s.iter().collect(),
        }
    }
}

impl TryFrom<CellSetRepr> for CellSet {
    type Error = String;

    fn try_from(r: CellSetRepr) -> Result<Self, String> {
        let mut s = CellSet::with_capacity(r.capacity);
        for c in r.cells {
            if c >= r.capacity {
                return Err(format!("cell index {c} out of range"));
            }
            s.insert(c);
        }
        Ok(s)
    }
}

impl CellSet {
    pub fn with_capacity(n_cells: usize) -> Self {
        CellSet {
            words: vec![0; n_cells.div_ceil(64)],
        }
    }

    pub fn insert(&mut self, idx: usize) {
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.words[idx / 64] & (1 << (idx % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

/// Rectangular wall/floor map. Cells outside the rectangle count as walls.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    rows: u16,
    cols: u16,
    floor: Vec<bool>,
}

impl Grid {
    pub fn new(rows: u16, cols: u16, floor: Vec<bool>) -> Self {
        assert_eq!(floor.len(), rows as usize * cols as usize);
        Grid { rows, cols, floor }
    }

    pub fn rows(&self) -> u16 {
        self.rows
    }

    pub fn cols(&self) -> u16 {
        self.cols
    }

    pub fn n_cells(&self) -> usize {
        self.floor.len()
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row as usize * self.cols as usize + c.col as usize
    }

    pub fn cell(&self, idx: usize) -> Cell {
        Cell::new(
            (idx / self.cols as usize) as u16,
            (idx % self.cols as usize) as u16,
        )
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    pub fn is_floor(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.floor[self.index(c)]
    }

    /// The floor cell one step from `c` in direction `d`, if any.
    pub fn neighbor(&self, c: Cell, d: Dir) -> Option<Cell> {
        let (dr, dc) = d.delta();
        let r = c.row as i32 + dr;
        let k = c.col as i32 + dc;
        if r < 0 || k < 0 {
            return None;
        }
        let n = Cell::new(r as u16, k as u16);
        self.is_floor(n).then_some(n)
    }

    pub fn floor_neighbors(&self, c: Cell) -> impl Iterator<Item = (Dir, Cell)> + '_ {
        Dir::ALL
            .into_iter()
            .filter_map(move |d| self.neighbor(c, d).map(|n| (d, n)))
    }

    pub fn floor_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells())
            .filter(|&i| self.floor[i])
            .map(|i| self.cell(i))
    }

    /// BFS distances from `from` to every cell; `u32::MAX` marks unreachable.
    pub fn bfs(&self, from: Cell) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n_cells()];
        if !self.is_floor(from) {
            return dist;
        }
        let mut queue = VecDeque::new();
        dist[self.index(from)] = 0;
        queue.push_back(from);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)];
            for (_, n) in self.floor_neighbors(c) {
                let ni = self.index(n);
                if dist[ni] == u32::MAX {
                    dist[ni] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

/// All-pairs shortest path lengths over floor cells.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<u32>,
}

impl DistanceTable {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n_cells();
        let mut dist = vec![u32::MAX; n * n];
        for c in grid.floor_cells() {
            let row = grid.bfs(c);
            let i = grid.index(c);
            dist[i * n..(i + 1) * n].copy_from_slice(&row);
        }
        DistanceTable { n, dist }
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.dist[a * self.n + b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor(len: u16) -> Grid {
        Grid::new(1, len, vec![true; len as usize])
    }

    #[test]
    fn neighbors_respect_bounds() {
        let g = corridor(3);
        assert_eq!(g.neighbor(Cell::new(0, 0), Dir::Left), None);
        assert_eq!(g.neighbor(Cell::new(0, 0), Dir::Up), None);
        assert_eq!(g.neighbor(Cell::new(0, 0), Dir::Right), Some(Cell::new(0, 1)));
    }

    #[test]
    fn bfs_counts_steps() {
        let g = corridor(5);
        let d = g.bfs(Cell::new(0, 0));
        assert_eq!(d, vec![0, 1, 2, 3, 4]);
        let t = DistanceTable::new(&g);
        assert_eq!(t.get(4, 1), 3);
    }

    #[test]
    fn cellset_basics() {
        let mut s = CellSet::with_capacity(130);
        s.insert(0);
        s.insert(129);
        assert!(s.contains(129) && !s.contains(64));
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 129]);
    }
}
