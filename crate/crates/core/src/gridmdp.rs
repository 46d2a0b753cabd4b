//! The slippery maze: transition structure, value iteration, greedy and
//! softmax policy extraction, and the Markov reward process a fixed policy
//! induces.
//!
//! Conventions used throughout:
//! - reward 1 is earned on the transition that enters the goal;
//! - the goal is absorbing and contributes no continuation value;
//! - probability mass of a move that would leave the grid stays on the
//!   current cell.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqmeasure::Token;

pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid must be at least 1x1 with two distinct cells, got {height}x{width}")]
    BadShape { height: usize, width: usize },
    #[error("cell {0} lies outside the grid")]
    OutOfGrid(Cell),
    #[error("start and goal must differ")]
    StartIsGoal,
    #[error("slip probabilities must be non-negative and sum to 1, got ({0}, {1}, {2})")]
    BadSlip(f64, f64, f64),
    #[error("discount must lie in [0, 1), got {0}")]
    BadDiscount(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("value iteration did not converge within {sweeps} sweeps (last delta {delta:e})")]
    NotConverged { sweeps: usize, delta: f64 },
    #[error("policy revisits {0} before reaching the goal")]
    Cycle(Cell),
    #[error("policy has no action for {0}")]
    MissingAction(Cell),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Fixed order; argmax ties resolve to the earliest entry.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two slip directions, in (p2, p3) order.
    pub fn perpendicular(self) -> (Action, Action) {
        match self {
            Action::Up | Action::Down => (Action::Left, Action::Right),
            Action::Left | Action::Right => (Action::Up, Action::Down),
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Action::Up => '↑',
            Action::Down => '↓',
            Action::Left => '←',
            Action::Right => '→',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    pub start: Cell,
    pub goal: Cell,
}

impl GridSpec {
    pub fn new(height: usize, width: usize, start: Cell, goal: Cell) -> Result<Self, GridError> {
        if height == 0 || width == 0 || height * width < 2 {
            return Err(GridError::BadShape { height, width });
        }
        let grid = GridSpec {
            height,
            width,
            start,
            goal,
        };
        for cell in [start, goal] {
            if !grid.contains(cell) {
                return Err(GridError::OutOfGrid(cell));
            }
        }
        if start == goal {
            return Err(GridError::StartIsGoal);
        }
        Ok(grid)
    }

    /// The 5x5 maze with start (0,0) and goal (3,4).
    pub fn maze() -> Self {
        GridSpec {
            height: 5,
            width: 5,
            start: Cell::new(0, 0),
            goal: Cell::new(3, 4),
        }
    }

    pub fn n_states(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn goal_index(&self) -> usize {
        self.index(self.goal)
    }

    pub fn start_index(&self) -> usize {
        self.index(self.start)
    }

    /// Row-major state code, `row * width + col`.
    pub fn encode(&self, cell: Cell) -> Result<Token, GridError> {
        if !self.contains(cell) {
            return Err(GridError::OutOfGrid(cell));
        }
        Ok(self.index(cell) as Token)
    }

    /// Neighbour in direction `action`, or `cell` itself if that leaves the grid.
    pub fn step(&self, cell: Cell, action: Action) -> Cell {
        let (row, col) = (cell.row, cell.col);
        match action {
            Action::Up if row > 0 => Cell::new(row - 1, col),
            Action::Down if row + 1 < self.height => Cell::new(row + 1, col),
            Action::Left if col > 0 => Cell::new(row, col - 1),
            Action::Right if col + 1 < self.width => Cell::new(row, col + 1),
            _ => cell,
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::maze()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipModel {
    pub intended: f64,
    pub first_perpendicular: f64,
    pub second_perpendicular: f64,
}

impl SlipModel {
    pub fn new(p1: f64, p2: f64, p3: f64) -> Result<Self, GridError> {
        let ok = [p1, p2, p3].iter().all(|p| p.is_finite() && *p >= 0.0)
            && (p1 + p2 + p3 - 1.0).abs() <= 1e-12;
        if !ok {
            return Err(GridError::BadSlip(p1, p2, p3));
        }
        Ok(SlipModel {
            intended: p1,
            first_perpendicular: p2,
            second_perpendicular: p3,
        })
    }

    pub fn deterministic() -> Self {
        SlipModel {
            intended: 1.0,
            first_perpendicular: 0.0,
            second_perpendicular: 0.0,
        }
    }
}

impl Default for SlipModel {
    fn default() -> Self {
        SlipModel {
            intended: 0.8,
            first_perpendicular: 0.1,
            second_perpendicular: 0.1,
        }
    }
}

/// Sparse `P(s' | s, a)`: one successor list per (state, action), sorted by
/// successor index with no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    n_states: usize,
    goal: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn row(&self, state: usize, action: Action) -> &[(usize, f64)] {
        &self.rows[state * Action::ALL.len() + action.index()]
    }

    pub(crate) fn row_mut(&mut self, state: usize, action: Action) -> &mut Vec<(usize, f64)> {
        &mut self.rows[state * Action::ALL.len() + action.index()]
    }

    pub fn prob(&self, state: usize, action: Action, next: usize) -> f64 {
        self.row(state, action)
            .iter()
            .find(|(s, _)| *s == next)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Largest absolute deviation of any row sum from 1, or `None` if a
    /// probability is negative or non-finite.
    pub fn max_row_error(&self) -> Option<f64> {
        let mut worst = 0.0f64;
        for row in &self.rows {
            if row.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
                return None;
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            worst = worst.max((sum - 1.0).abs());
        }
        Some(worst)
    }

    /// Expected one-step value `Σ P(s'|s,a) [1{s'=goal} + γ 1{s'≠goal} V(s')]`.
    pub fn q_value(&self, values: &[f64], state: usize, action: Action, gamma: f64) -> f64 {
        self.row(state, action)
            .iter()
            .map(|&(next, p)| {
                if next == self.goal {
                    p
                } else {
                    p * gamma * values[next]
                }
            })
            .sum()
    }

    fn action_values(&self, values: &[f64], state: usize, gamma: f64) -> [f64; 4] {
        Action::ALL.map(|a| self.q_value(values, state, a, gamma))
    }
}

pub fn build_transition_model(grid: &GridSpec, slip: &SlipModel) -> TransitionModel {
    let n = grid.n_states();
    let goal = grid.goal_index();
    let mut rows = Vec::with_capacity(n * Action::ALL.len());
    for s in 0..n {
        let cell = grid.cell(s);
        for action in Action::ALL {
            if s == goal {
                rows.push(vec![(goal, 1.0)]);
                continue;
            }
            let (side_a, side_b) = action.perpendicular();
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
            for (dir, p) in [
                (action, slip.intended),
                (side_a, slip.first_perpendicular),
                (side_b, slip.second_perpendicular),
            ] {
                if p == 0.0 {
                    continue;
                }
                let next = grid.index(grid.step(cell, dir));
                match row.iter_mut().find(|(t, _)| *t == next) {
                    Some(entry) => entry.1 += p,
                    None => row.push((next, p)),
                }
            }
            row.sort_by_key(|(t, _)| *t);
            rows.push(row);
        }
    }
    TransitionModel {
        n_states: n,
        goal,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    values: Vec<f64>,
    goal: usize,
}

impl ValueFunction {
    pub fn from_values(values: Vec<f64>, goal: usize) -> Self {
        ValueFunction { values, goal }
    }

    /// Continuation values; the goal entry is 0.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value as tabulated for display: the goal reads 1.
    pub fn reported(&self, state: usize) -> f64 {
        if state == self.goal {
            1.0
        } else {
            self.values[state]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueIterationConfig {
    pub gamma: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ValueIterationConfig {
    fn default() -> Self {
        ValueIterationConfig {
            gamma: DEFAULT_GAMMA,
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub value: ValueFunction,
    /// Max-norm change of each sweep, in order.
    pub deltas: Vec<f64>,
}

/// Synchronous value iteration from `V ≡ 0` until the max-norm change drops
/// below the tolerance.
pub fn value_iteration(
    model: &TransitionModel,
    config: &ValueIterationConfig,
) -> Result<ValueIteration, GridError> {
    let ValueIterationConfig {
        gamma,
        tolerance,
        max_sweeps,
    } = *config;
    if !(0.0..1.0).contains(&gamma) {
        return Err(GridError::BadDiscount(gamma));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(GridError::BadTolerance(tolerance));
    }
    let n = model.n_states();
    let goal = model.goal();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut deltas = Vec::new();
    for _ in 0..max_sweeps {
        let mut delta = 0.0f64;
        for s in 0..n {
            next[s] = if s == goal {
                0.0
            } else {
                model
                    .action_values(&values, s, gamma)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            delta = delta.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        deltas.push(delta);
        if delta < tolerance {
            return Ok(ValueIteration {
                value: ValueFunction::from_values(values, goal),
                deltas,
            });
        }
    }
    Err(GridError::NotConverged {
        sweeps: max_sweeps,
        delta: deltas.last().copied().unwrap_or(f64::NAN),
    })
}

fn argmax(values: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    /// One entry per state; `None` at the goal.
    pub actions: Vec<Option<Action>>,
}

impl DeterministicPolicy {
    pub fn action(&self, state: usize) -> Option<Action> {
        self.actions.get(state).copied().flatten()
    }
}

pub fn greedy_policy(model: &TransitionModel, v: &ValueFunction, gamma: f64) -> DeterministicPolicy {
    let actions = (0..model.n_states())
        .map(|s| {
            if s == model.goal() {
                None
            } else {
                Some(Action::ALL[argmax(&model.action_values(v.values(), s, gamma))])
            }
        })
        .collect();
    DeterministicPolicy { actions }
}

/// Follows intended moves from start to goal and returns the encoded path.
pub fn optimal_path(policy: &DeterministicPolicy, grid: &GridSpec) -> Result<Vec<Token>, GridError> {
    let mut visited = vec![false; grid.n_states()];
    let mut cell = grid.start;
    let mut path = vec![grid.encode(cell)?];
    while cell != grid.goal {
        let s = grid.index(cell);
        if visited[s] {
            return Err(GridError::Cycle(cell));
        }
        visited[s] = true;
        let action = policy.action(s).ok_or(GridError::MissingAction(cell))?;
        cell = grid.step(cell, action);
        path.push(grid.encode(cell)?);
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    /// Action distribution per state in [`Action::ALL`] order.
    pub dist: Vec<[f64; 4]>,
    pub tau: f64,
}

/// Boltzmann policy `π(a|s) ∝ exp(Q(s,a)/τ)`.
pub fn softmax_policy(
    model: &TransitionModel,
    v: &ValueFunction,
    gamma: f64,
    tau: f64,
) -> Result<StochasticPolicy, GridError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(GridError::BadTemperature(tau));
    }
    let dist = (0..model.n_states())
        .map(|s| {
            let q = model.action_values(v.values(), s, gamma);
            let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w = q.map(|x| ((x - top) / tau).exp());
            let z: f64 = w.iter().sum();
            w.map(|x| x / z)
        })
        .collect();
    Ok(StochasticPolicy { dist, tau })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Deterministic(DeterministicPolicy),
    Stochastic(StochasticPolicy),
}

impl Policy {
    /// `π(·|s)`; a deterministic policy is a point mass.
    pub fn distribution(&self, state: usize) -> [f64; 4] {
        match self {
            Policy::Deterministic(p) => {
                let mut d = [0.0; 4];
                if let Some(a) = p.action(state) {
                    d[a.index()] = 1.0;
                }
                d
            }
            Policy::Stochastic(p) => p.dist[state],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Option<Action> {
        match self {
            Policy::Deterministic(p) => p.action(state),
            Policy::Stochastic(p) => {
                let d = &p.dist[state];
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, w) in d.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return Some(Action::ALL[i]);
                    }
                }
                // rounding left u above the cumulative sum
                d.iter().rposition(|w| *w > 0.0).map(|i| Action::ALL[i])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrpModel {
    /// Dense row-stochastic state-to-state matrix.
    pub p: Vec<Vec<f64>>,
    /// Expected one-step reward per state.
    pub r: Vec<f64>,
    pub gamma: f64,
}

impl MrpModel {
    /// Solves `(I - γP) v = r` by Gaussian elimination with partial pivoting.
    pub fn state_values(&self) -> Vec<f64> {
        let n = self.r.len();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| f64::from(u8::from(i == j)) - self.gamma * self.p[i][j])
                    .collect();
                row.push(self.r[i]);
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap_or(col);
            m.swap(col, pivot);
            let head = m[col][col];
            for row in (col + 1)..n {
                let factor = m[row][col] / head;
                if factor != 0.0 {
                    let (upper, lower) = m.split_at_mut(row);
                    for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                        *x -= factor * p;
                    }
                }
            }
        }
        let mut v = vec![0.0; n];
        for i in (0..n).rev() {
            let tail: f64 = ((i + 1)..n).map(|k| m[i][k] * v[k]).sum();
            v[i] = (m[i][n] - tail) / m[i][i];
        }
        v
    }
}

/// Policy-averaged transitions and rewards, `P^π` and `R^π`.
///
/// The reward of `(s, a)` is the probability of entering the goal; the goal
/// row is absorbing with zero reward.
pub fn induce_mrp(model: &TransitionModel, policy: &Policy, gamma: f64) -> MrpModel {
    let n = model.n_states();
    let goal = model.goal();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        if s == goal {
            p[s][goal] = 1.0;
            continue;
        }
        let pi = policy.distribution(s);
        for action in Action::ALL {
            let w = pi[action.index()];
            if w == 0.0 {
                continue;
            }
            for &(next, prob) in model.row(s, action) {
                p[s][next] += w * prob;
                if next == goal {
                    r[s] += w * prob;
                }
            }
        }
    }
    MrpModel { p, r, gamma }
}

/// Renders the value table, one grid row per line, two decimals.
pub fn format_value_table(grid: &GridSpec, v: &ValueFunction) -> String {
    let mut out = String::new();
    for row in 0..grid.height {
        let cells: Vec<String> = (0..grid.width)
            .map(|col| format!("{:.2}", v.reported(grid.index(Cell::new(row, col)))))
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_policy_table(grid: &GridSpec, policy: &DeterministicPolicy) -> String {
    let mut out = String::new();
    for row in 0..grid.height {
        let cells: Vec<String> = (0..grid.width)
            .map(|col| {
                let cell = Cell::new(row, col);
                match policy.action(grid.index(cell)) {
                    Some(a) => format!("{cell}:{}", a.arrow()),
                    None => format!("{cell}:Goal"),
                }
            })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}
