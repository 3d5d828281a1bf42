//! Continuous 2D point mazes built from ASCII layouts.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D point: state, goal, or action.
pub type Point = [f64; 2];

/// Backoff from a wall face after a collision, in length units.
pub const WALL_MARGIN: f64 = 1e-6;

const BUILTIN: &[(&str, &str)] = &[
    ("point_maze_a", include_str!("../../layouts/point_maze_a.txt")),
    ("point_maze_b", include_str!("../../layouts/point_maze_b.txt")),
    ("point_maze_c", include_str!("../../layouts/point_maze_c.txt")),
    ("square_large", include_str!("../../layouts/square_large.txt")),
];

/// Names of the layouts shipped with the crate.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Grid cell `(row, col)`.
pub type Cell = (usize, usize);

/// Agent state in a point maze.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousState {
    pub position: Point,
}

/// Geometry of a continuous maze. Cells outside the grid count as walls.
///
/// Position `(x, y)` lies in cell `(floor(y / cell_size), floor(x / cell_size))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    walls: Vec<Vec<bool>>,
    rows: usize,
    cols: usize,
    cell_size: f64,
    action_scale: f64,
    start: Cell,
    goal_region: Vec<Cell>,
}

impl MazeSpec {
    /// Builds and validates a maze from a character grid (`#`, `.`, `S`).
    ///
    /// The goal region defaults to every free cell.
    pub fn from_grid(rows_text: &[&str], cell_size: f64, action_scale: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidMaze(format!("cell_size must be positive, got {cell_size}")));
        }
        if !(action_scale > 0.0 && action_scale.is_finite()) {
            return Err(Error::InvalidMaze(format!(
                "action_scale must be positive, got {action_scale}"
            )));
        }
        if rows_text.is_empty() {
            return Err(Error::InvalidMaze("grid has no rows".into()));
        }
        let cols = rows_text[0].chars().count();
        if cols == 0 {
            return Err(Error::InvalidMaze("grid has empty rows".into()));
        }
        let mut walls = Vec::with_capacity(rows_text.len());
        let mut start = None;
        for (r, line) in rows_text.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::InvalidMaze(format!(
                    "row {r} has {} columns, expected {cols}",
                    line.chars().count()
                )));
            }
            let mut row = Vec::with_capacity(cols);
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => row.push(true),
                    '.' => row.push(false),
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return Err(Error::InvalidMaze("more than one start cell".into()));
                        }
                        row.push(false);
                    }
                    other => {
                        return Err(Error::InvalidMaze(format!(
                            "unexpected character {other:?} at row {r}, col {c}"
                        )))
                    }
                }
            }
            walls.push(row);
        }
        let start = start.ok_or_else(|| Error::InvalidMaze("no start cell".into()))?;
        let rows = walls.len();
        let goal_region = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !walls[r][c])
            .collect();
        Ok(Self {
            walls,
            rows,
            cols,
            cell_size,
            action_scale,
            start,
            goal_region,
        })
    }

    /// Parses the layout file format: two header lines
    /// (`cell_size=<float>`, `action_scale=<float>`) followed by grid rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim_end).filter(|l| !l.is_empty());
        let cell_size = parse_header(lines.next(), "cell_size")?;
        let action_scale = parse_header(lines.next(), "action_scale")?;
        let rows: Vec<&str> = lines.collect();
        Self::from_grid(&rows, cell_size, action_scale)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// One of the shipped layouts, by name.
    pub fn builtin(name: &str) -> Result<Self> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::parse(text))
            .unwrap_or_else(|| {
                Err(Error::InvalidMaze(format!(
                    "unknown layout {name:?}; known: {:?}",
                    builtin_names()
                )))
            })
    }

    /// Restricts the admissible target goals. Every cell must be free.
    pub fn with_goal_region(mut self, cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidMaze("goal region is empty".into()));
        }
        for &(r, c) in &cells {
            if !self.cell_is_free(r as isize, c as isize) {
                return Err(Error::InvalidMaze(format!("goal cell ({r}, {c}) is not free")));
            }
        }
        self.goal_region = cells;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    pub fn start_cell(&self) -> Cell {
        self.start
    }

    pub fn goal_region(&self) -> &[Cell] {
        &self.goal_region
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.walls[row][col]
    }

    /// Axis-aligned box spanned by the grid: `([x_lo, y_lo], [x_hi, y_hi])`.
    pub fn bounds(&self) -> (Point, Point) {
        (
            [0.0, 0.0],
            [self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size],
        )
    }

    pub fn cell_center(&self, (row, col): Cell) -> Point {
        [
            (col as f64 + 0.5) * self.cell_size,
            (row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Cell containing a point, or `None` outside the grid.
    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        let c = (p[0] / self.cell_size).floor();
        let r = (p[1] / self.cell_size).floor();
        if !(c.is_finite() && r.is_finite()) || c < 0.0 || r < 0.0 {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    fn cell_is_free(&self, r: isize, c: isize) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.rows
            && (c as usize) < self.cols
            && !self.walls[r as usize][c as usize]
    }

    pub fn is_free(&self, p: Point) -> bool {
        self.cell_of(p)
            .map(|(r, c)| !self.walls[r][c])
            .unwrap_or(false)
    }

    /// The fixed initial state: center of the start cell. The seed is
    /// accepted for interface symmetry; the start state does not vary.
    pub fn reset(&self, _seed: u64) -> ContinuousState {
        ContinuousState {
            position: self.cell_center(self.start),
        }
    }

    /// Moves by `clip(action, -1, 1) * action_scale`, stopping at the first
    /// wall contact along the segment.
    pub fn step(&self, state: ContinuousState, action: Point) -> ContinuousState {
        let clip = |a: f64| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
        let d = [
            clip(action[0]) * self.action_scale,
            clip(action[1]) * self.action_scale,
        ];
        let p = state.position;
        let len = d[0].hypot(d[1]);
        if len == 0.0 {
            return state;
        }
        let t = match self.first_wall_hit(p, d) {
            None => 1.0,
            Some(t_hit) => (t_hit - WALL_MARGIN / len).max(0.0),
        };
        let q = [p[0] + t * d[0], p[1] + t * d[1]];
        if self.is_free(q) {
            ContinuousState { position: q }
        } else {
            // rounding put the backed-off point across a face
            state
        }
    }

    /// Segment parameter in `[0, 1]` where `p + t d` first enters a wall cell.
    fn first_wall_hit(&self, p: Point, d: Point) -> Option<f64> {
        let cs = self.cell_size;
        let mut cx = (p[0] / cs).floor() as isize;
        let mut cy = (p[1] / cs).floor() as isize;
        let step_x: isize = if d[0] > 0.0 { 1 } else { -1 };
        let step_y: isize = if d[1] > 0.0 { 1 } else { -1 };
        let axis_setup = |pos: f64, dir: f64, cell: isize| -> (f64, f64) {
            if dir > 0.0 {
                (((cell + 1) as f64 * cs - pos) / dir, cs / dir)
            } else if dir < 0.0 {
                ((cell as f64 * cs - pos) / dir, -cs / dir)
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let (mut t_max_x, t_delta_x) = axis_setup(p[0], d[0], cx);
        let (mut t_max_y, t_delta_y) = axis_setup(p[1], d[1], cy);
        loop {
            let t = t_max_x.min(t_max_y);
            if t > 1.0 {
                return None;
            }
            let t = t.max(0.0);
            if t_max_x == t_max_y {
                // passing exactly through a corner: both side cells must be open
                if !self.cell_is_free(cy, cx + step_x) || !self.cell_is_free(cy + step_y, cx) {
                    return Some(t);
                }
                cx += step_x;
                cy += step_y;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                cx += step_x;
                t_max_x += t_delta_x;
            } else {
                cy += step_y;
                t_max_y += t_delta_y;
            }
            if !self.cell_is_free(cy, cx) {
                return Some(t);
            }
        }
    }

    /// Renders back to the layout file format.
    pub fn to_layout_string(&self) -> String {
        let mut out = format!(
            "cell_size={}\naction_scale={}\n",
            self.cell_size, self.action_scale
        );
        for (r, row) in self.walls.iter().enumerate() {
            for (c, wall) in row.iter().enumerate() {
                out.push(if (r, c) == self.start {
                    'S'
                } else if *wall {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MazeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_layout_string())
    }
}

fn parse_header(line: Option<&str>, key: &str) -> Result<f64> {
    let line = line.ok_or_else(|| Error::InvalidMaze(format!("missing `{key}=` header")))?;
    let value = line
        .trim()
        .strip_prefix(key)
        .and_then(|rest| rest.trim_start().strip_prefix('='))
        .ok_or_else(|| Error::InvalidMaze(format!("expected `{key}=<float>`, got {line:?}")))?;
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidMaze(format!("invalid {key} value {value:?}")))
}
