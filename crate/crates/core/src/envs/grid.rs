//! Discrete gridworld goal-MDPs derived from maze layouts.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::maze::{Cell, MazeSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Stay];

    fn index(self) -> usize {
        self as usize
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
            Move::Stay => (0, 0),
        }
    }
}

/// Deterministic gridworld over the free cells of a layout.
///
/// States are the free cells in row-major order. Moves into walls or off
/// the grid leave the state unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMdp {
    cells: Vec<Cell>,
    transitions: Vec<[usize; 5]>,
    start: usize,
}

impl GridMdp {
    pub fn from_maze(maze: &MazeSpec) -> Self {
        let (rows, cols) = (maze.rows(), maze.cols());
        let mut index = vec![vec![None; cols]; rows];
        let mut cells = Vec::new();
        for (r, row) in index.iter_mut().enumerate() {
            for (c, slot) in row.iter_mut().enumerate() {
                if !maze.is_wall(r, c) {
                    *slot = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        let transitions = cells
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                let mut next = [i; 5];
                for mv in Move::ALL {
                    let (dr, dc) = mv.offset();
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols {
                        if let Some(j) = index[nr as usize][nc as usize] {
                            next[mv.index()] = j;
                        }
                    }
                }
                next
            })
            .collect();
        let start = index[maze.start_cell().0][maze.start_cell().1].expect("start is free");
        Self {
            cells,
            transitions,
            start,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn cell(&self, index: usize) -> Cell {
        self.cells[index]
    }

    pub fn step(&self, state: usize, mv: Move) -> Result<usize> {
        self.transitions
            .get(state)
            .map(|t| t[mv.index()])
            .ok_or(Error::IndexOutOfRange {
                index: state,
                len: self.len(),
            })
    }

    /// States reachable from the start by breadth-first flood fill.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(s) = queue.pop_front() {
            for &n in &self.transitions[s] {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    pub fn fully_reachable(&self) -> bool {
        self.reachable().into_iter().all(|r| r)
    }
}

/// Convenience wrapper matching the free-function form.
pub fn grid_step(mdp: &GridMdp, cell: usize, mv: Move) -> Result<usize> {
    mdp.step(cell, mv)
}
