//! Cliff-walking grids as tabular MDPs.
//!
//! The goal is absorbing with zero reward, so the episodic task becomes an
//! infinite-horizon discounted one. Stepping into a cliff cell pays
//! `cliff_reward` and puts the agent back on the start cell in the same
//! transition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub type Cell = (usize, usize);

pub const NUM_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(a: usize) -> Option<Action> {
        Self::ALL.get(a).copied()
    }

    fn perpendicular(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
        }
    }

    /// Left and right swap under a left-right reflection.
    pub fn mirrored(self) -> Action {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
            a => a,
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Action::Up => '^',
            Action::Down => 'v',
            Action::Left => '<',
            Action::Right => '>',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cliff_cells: Vec<Cell>,
    pub start: Cell,
    pub goal: Cell,
    pub step_reward: f64,
    pub cliff_reward: f64,
    #[serde(default)]
    pub slip_probability: f64,
}

impl Default for GridSpec {
    /// The standard 4x12 layout: cliff along the bottom row between start and goal.
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 12,
            cliff_cells: (1..=10).map(|c| (3, c)).collect(),
            start: (3, 0),
            goal: (3, 11),
            step_reward: -1.0,
            cliff_reward: -100.0,
            slip_probability: 0.0,
        }
    }
}

impl GridSpec {
    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn state(&self, cell: Cell) -> usize {
        cell.0 * self.cols + cell.1
    }

    pub fn cell(&self, state: usize) -> Cell {
        (state / self.cols, state % self.cols)
    }

    pub fn is_cliff(&self, cell: Cell) -> bool {
        self.cliff_cells.contains(&cell)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::arg("grid must have at least one row and one column"));
        }
        let inside = |c: &Cell| c.0 < self.rows && c.1 < self.cols;
        if !inside(&self.start) || !inside(&self.goal) {
            return Err(Error::arg("start and goal must lie inside the grid"));
        }
        if let Some(c) = self.cliff_cells.iter().find(|c| !inside(c)) {
            return Err(Error::arg(format!("cliff cell {c:?} outside the grid")));
        }
        if self.start == self.goal {
            return Err(Error::arg("start and goal must differ"));
        }
        if self.is_cliff(self.start) || self.is_cliff(self.goal) {
            return Err(Error::arg("start and goal cannot be cliff cells"));
        }
        if !(0.0..1.0).contains(&self.slip_probability) {
            return Err(Error::arg(format!(
                "slip probability {} outside [0, 1)",
                self.slip_probability
            )));
        }
        if !self.step_reward.is_finite() || !self.cliff_reward.is_finite() {
            return Err(Error::arg("rewards must be finite"));
        }
        Ok(())
    }

    fn step(&self, cell: Cell, action: Action) -> Cell {
        let (r, c) = cell;
        match action {
            Action::Up => (r.saturating_sub(1), c),
            Action::Down => ((r + 1).min(self.rows - 1), c),
            Action::Left => (r, c.saturating_sub(1)),
            Action::Right => (r, (c + 1).min(self.cols - 1)),
        }
    }

    /// Non-cliff states, in state order.
    pub fn free_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| !self.is_cliff(self.cell(s))).collect()
    }
}

/// Builds the transition and reward model of `spec` with discount `gamma`.
pub fn build_cliff_mdp(spec: &GridSpec, gamma: f64) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.num_states();
    let mut transition = DMatrix::zeros(n * NUM_ACTIONS, n);
    let mut reward = DMatrix::zeros(n, NUM_ACTIONS);
    let p = spec.slip_probability;
    for s in 0..n {
        let cell = spec.cell(s);
        for action in Action::ALL {
            let a = action as usize;
            let row = a * n + s;
            if cell == spec.goal {
                transition[(row, s)] = 1.0;
                continue;
            }
            let [side_a, side_b] = action.perpendicular();
            let outcomes = [(action, 1.0 - p), (side_a, p / 2.0), (side_b, p / 2.0)];
            for (dir, prob) in outcomes {
                if prob == 0.0 {
                    continue;
                }
                let dest = spec.step(cell, dir);
                let (next, r) = if spec.is_cliff(dest) {
                    (spec.start, spec.cliff_reward)
                } else {
                    (dest, spec.step_reward)
                };
                transition[(row, spec.state(next))] += prob;
                reward[(s, a)] += prob * r;
            }
        }
    }
    TabularMdp::new(transition, reward, gamma)
}

/// Reflects cliffs, start and goal across the vertical center line.
pub fn mirror_spec(spec: &GridSpec) -> GridSpec {
    let flip = |(r, c): Cell| (r, spec.cols - 1 - c);
    GridSpec {
        cliff_cells: spec.cliff_cells.iter().copied().map(flip).collect(),
        start: flip(spec.start),
        goal: flip(spec.goal),
        ..spec.clone()
    }
}

/// Flat-index permutation induced by [`mirror_spec`]: entry `i` of a value
/// function on `spec` lands at `perm[i]` on the mirrored grid.
pub fn mirror_permutation(spec: &GridSpec) -> Vec<usize> {
    let n = spec.num_states();
    let mut perm = vec![0; n * NUM_ACTIONS];
    for s in 0..n {
        let (r, c) = spec.cell(s);
        let s2 = spec.state((r, spec.cols - 1 - c));
        for action in Action::ALL {
            perm[action as usize * n + s] = action.mirrored() as usize * n + s2;
        }
    }
    perm
}

/// Text rendering of a deterministic policy: arrows, `#` for cliffs, `S`/`G`.
pub fn render_policy(spec: &GridSpec, actions: &[usize]) -> String {
    let mut out = String::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let ch = if spec.is_cliff((r, c)) {
                '#'
            } else if (r, c) == spec.goal {
                'G'
            } else {
                Action::from_index(actions[spec.state((r, c))]).map_or('?', Action::arrow)
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}
