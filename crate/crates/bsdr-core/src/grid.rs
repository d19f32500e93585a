//! Gridworld geometry: board layout, the five-action move set with
//! bounce-back walls, state feature maps, and trajectory bookkeeping.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Default ceiling on exhaustive trajectory enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// A cell on the board, addressed by column `x` and row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    pub x: i32,
    pub y: i32,
}

impl State {
    pub const fn new(x: i32, y: i32) -> Self {
        State { x, y }
    }

    /// Manhattan distance to another cell.
    pub fn manhattan(&self, other: &State) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

impl From<(i32, i32)> for State {
    fn from((x, y): (i32, i32)) -> Self {
        State { x, y }
    }
}

/// One of the five moves available in every state. Moving into a wall or
/// an obstacle leaves the agent where it is, so every state always has
/// exactly five (not necessarily distinct) successors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    /// All actions in index order.
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    /// Number of actions.
    pub const COUNT: usize = 5;

    /// Coordinate offset `(dx, dy)`; `Up` increases `y`.
    pub const fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    /// Position of this action in [`Action::ALL`].
    pub const fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    /// Inverse of [`Action::index`].
    pub const fn from_index(i: usize) -> Option<Action> {
        match i {
            0 => Some(Action::Up),
            1 => Some(Action::Down),
            2 => Some(Action::Left),
            3 => Some(Action::Right),
            4 => Some(Action::Stay),
            _ => None,
        }
    }

    /// Stable lowercase name.
    pub const fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stay => "stay",
        }
    }
}

/// How states are embedded as feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMap {
    /// `[1, closeness]` where closeness rescales Manhattan distance to the
    /// nearest goal into `[0, 1]` (1 at a goal, 0 at the farthest cell).
    BiasGoalDist,
    /// Indicator of the cell itself; dimension `width * height`.
    OneHot,
    /// `[1, 1{s = g_1}, ..., 1{s = g_k}]` over the board's goal list.
    GoalIndicators,
}

impl FeatureMap {
    /// Stable lowercase name, also accepted by `FromStr`.
    pub const fn name(self) -> &'static str {
        match self {
            FeatureMap::BiasGoalDist => "bias_goal_dist",
            FeatureMap::OneHot => "one_hot",
            FeatureMap::GoalIndicators => "goal_indicators",
        }
    }
}

impl core::str::FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias_goal_dist" => Ok(FeatureMap::BiasGoalDist),
            "one_hot" => Ok(FeatureMap::OneHot),
            "goal_indicators" => Ok(FeatureMap::GoalIndicators),
            other => Err(Error::InvalidSpec(format!(
                "unknown feature map {other:?} (expected bias_goal_dist, one_hot, or goal_indicators)"
            ))),
        }
    }
}

impl core::fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated board: dimensions, obstacles, start cell, goal cells, the
/// episode horizon (number of actions per trajectory), and the feature
/// map. Successor cells and feature vectors are precomputed once.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    width: usize,
    height: usize,
    obstacle: Vec<bool>,
    start: State,
    goals: Vec<State>,
    horizon: usize,
    feature_map: FeatureMap,
    feature_dim: usize,
    /// Flattened feature table, `n_cells x feature_dim`; obstacle rows are zero.
    features: Vec<f64>,
    /// Successor cell index per `(cell, action)`; obstacle rows are unused.
    successors: Vec<usize>,
    /// Valid cells in row-major order.
    valid: Vec<State>,
}

impl GridSpec {
    /// Build and validate a board description.
    pub fn new(
        width: usize,
        height: usize,
        obstacles: &[(i32, i32)],
        start: (i32, i32),
        goals: &[(i32, i32)],
        horizon: usize,
        feature_map: FeatureMap,
    ) -> Result<GridSpec> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSpec(format!(
                "board must be at least 1x1, got {width}x{height}"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidSpec(
                "horizon must be at least 1 transition".to_string(),
            ));
        }
        if width > (i32::MAX as usize) || height > (i32::MAX as usize) {
            return Err(Error::InvalidSpec("board dimensions overflow".to_string()));
        }
        let n_cells = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidSpec("board dimensions overflow".to_string()))?;

        let in_bounds =
            |s: State| s.x >= 0 && s.y >= 0 && (s.x as usize) < width && (s.y as usize) < height;
        let idx = |s: State| (s.y as usize) * width + (s.x as usize);

        let mut obstacle = vec![false; n_cells];
        for &(x, y) in obstacles {
            let s = State::new(x, y);
            if !in_bounds(s) {
                return Err(Error::InvalidSpec(format!(
                    "obstacle ({x}, {y}) lies outside the {width}x{height} board"
                )));
            }
            obstacle[idx(s)] = true;
        }

        let start = State::from(start);
        if !in_bounds(start) || obstacle[idx(start)] {
            return Err(Error::InvalidSpec(format!(
                "start ({}, {}) is not a free cell",
                start.x, start.y
            )));
        }

        let mut goal_states = Vec::with_capacity(goals.len());
        for &(x, y) in goals {
            let g = State::new(x, y);
            if !in_bounds(g) || obstacle[idx(g)] {
                return Err(Error::InvalidSpec(format!(
                    "goal ({x}, {y}) is not a free cell"
                )));
            }
            if goal_states.contains(&g) {
                return Err(Error::InvalidSpec(format!(
                    "goal ({x}, {y}) is listed twice"
                )));
            }
            goal_states.push(g);
        }

        if feature_map == FeatureMap::BiasGoalDist && goal_states.is_empty() {
            return Err(Error::InvalidSpec(
                "the bias_goal_dist feature map needs at least one goal".to_string(),
            ));
        }

        let mut valid = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let s = State::new(x as i32, y as i32);
                if !obstacle[idx(s)] {
                    valid.push(s);
                }
            }
        }

        let feature_dim = match feature_map {
            FeatureMap::BiasGoalDist => 2,
            FeatureMap::OneHot => n_cells,
            FeatureMap::GoalIndicators => 1 + goal_states.len(),
        };

        // Closeness rescaling for bias_goal_dist: distances are measured to
        // the nearest goal and divided by the largest distance any free cell
        // attains, so the coordinate spans [0, 1] (and is identically 1 when
        // every free cell is a goal).
        let mut d_max = 0i32;
        let mut dist = vec![0i32; n_cells];
        if feature_map == FeatureMap::BiasGoalDist {
            for &s in &valid {
                let d = goal_states
                    .iter()
                    .map(|g| s.manhattan(g))
                    .min()
                    .expect("goal list checked non-empty");
                dist[idx(s)] = d;
                d_max = d_max.max(d);
            }
        }

        let mut features = vec![0.0; n_cells * feature_dim];
        for &s in &valid {
            let row = &mut features[idx(s) * feature_dim..(idx(s) + 1) * feature_dim];
            match feature_map {
                FeatureMap::BiasGoalDist => {
                    row[0] = 1.0;
                    row[1] = if d_max == 0 {
                        1.0
                    } else {
                        1.0 - dist[idx(s)] as f64 / d_max as f64
                    };
                }
                FeatureMap::OneHot => {
                    row[idx(s)] = 1.0;
                }
                FeatureMap::GoalIndicators => {
                    row[0] = 1.0;
                    for (k, g) in goal_states.iter().enumerate() {
                        if s == *g {
                            row[1 + k] = 1.0;
                        }
                    }
                }
            }
        }

        let mut successors = vec![0usize; n_cells * Action::COUNT];
        for &s in &valid {
            for a in Action::ALL {
                let (dx, dy) = a.delta();
                let cand = State::new(s.x + dx, s.y + dy);
                let next = if in_bounds(cand) && !obstacle[idx(cand)] {
                    cand
                } else {
                    s
                };
                successors[idx(s) * Action::COUNT + a.index()] = idx(next);
            }
        }

        Ok(GridSpec {
            width,
            height,
            obstacle,
            start,
            goals: goal_states,
            horizon,
            feature_map,
            feature_dim,
            features,
            successors,
            valid,
        })
    }

    /// Same board and horizon, different goal list (features recomputed).
    pub fn with_goals(&self, goals: &[(i32, i32)]) -> Result<GridSpec> {
        let obstacles: Vec<(i32, i32)> = self
            .valid_cell_complement()
            .iter()
            .map(|s| (s.x, s.y))
            .collect();
        GridSpec::new(
            self.width,
            self.height,
            &obstacles,
            (self.start.x, self.start.y),
            goals,
            self.horizon,
            self.feature_map,
        )
    }

    fn valid_cell_complement(&self) -> Vec<State> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let s = State::new(x as i32, y as i32);
                if self.obstacle[self.cell_index(s)] {
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> State {
        self.start
    }

    pub fn goals(&self) -> &[State] {
        &self.goals
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    /// Length of every feature vector.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Total number of board cells, obstacles included.
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// Free cells in row-major order.
    pub fn valid_states(&self) -> &[State] {
        &self.valid
    }

    /// Row-major cell index (`y * width + x`). Only meaningful for
    /// in-bounds states.
    #[inline]
    pub fn cell_index(&self, s: State) -> usize {
        (s.y as usize) * self.width + (s.x as usize)
    }

    /// Whether `s` is an in-bounds, non-obstacle cell.
    pub fn is_valid(&self, s: State) -> bool {
        s.x >= 0
            && s.y >= 0
            && (s.x as usize) < self.width
            && (s.y as usize) < self.height
            && !self.obstacle[self.cell_index(s)]
    }

    /// Feature vector of a valid state.
    pub fn phi(&self, s: State) -> Result<&[f64]> {
        if !self.is_valid(s) {
            return Err(Error::InvalidState { x: s.x, y: s.y });
        }
        Ok(self.phi_cell(self.cell_index(s)))
    }

    /// Feature row by cell index; the caller guarantees the cell is valid.
    #[inline]
    pub(crate) fn phi_cell(&self, cell: usize) -> &[f64] {
        &self.features[cell * self.feature_dim..(cell + 1) * self.feature_dim]
    }

    /// Where `a` leads from `s`, with bounce-back on walls and obstacles.
    pub fn successor(&self, s: State, a: Action) -> Result<State> {
        if !self.is_valid(s) {
            return Err(Error::InvalidState { x: s.x, y: s.y });
        }
        let next = self.successors[self.cell_index(s) * Action::COUNT + a.index()];
        Ok(self.state_of_cell(next))
    }

    /// Successor cell index; the caller guarantees the cell is valid.
    #[inline]
    pub(crate) fn succ_cell(&self, cell: usize, a: Action) -> usize {
        self.successors[cell * Action::COUNT + a.index()]
    }

    /// Inverse of [`GridSpec::cell_index`].
    #[inline]
    pub fn state_of_cell(&self, cell: usize) -> State {
        State::new((cell % self.width) as i32, (cell / self.width) as i32)
    }

    /// The five successor states of `s` in action order.
    pub fn neighbors(&self, s: State) -> Result<[State; 5]> {
        if !self.is_valid(s) {
            return Err(Error::InvalidState { x: s.x, y: s.y });
        }
        let cell = self.cell_index(s);
        let mut out = [s; 5];
        for a in Action::ALL {
            out[a.index()] = self.state_of_cell(self.succ_cell(cell, a));
        }
        Ok(out)
    }

    /// How many actions lead from `from` to `to` in one step.
    pub fn transition_multiplicity(&self, from: State, to: State) -> Result<usize> {
        Ok(self.neighbors(from)?.iter().filter(|&&n| n == to).count())
    }

    /// Check a trajectory against this board: full length, starts at the
    /// start cell, every state free, every step reachable by some action
    /// (and by the recorded action, when actions are present).
    pub fn validate_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.states.len() != self.horizon + 1 {
            return Err(Error::InvalidTrajectory {
                step: 0,
                reason: format!(
                    "expected {} states for horizon {}, got {}",
                    self.horizon + 1,
                    self.horizon,
                    traj.states.len()
                ),
            });
        }
        if traj.states[0] != self.start {
            return Err(Error::InvalidTrajectory {
                step: 0,
                reason: format!(
                    "trajectory starts at ({}, {}) but the board starts at ({}, {})",
                    traj.states[0].x, traj.states[0].y, self.start.x, self.start.y
                ),
            });
        }
        for (t, &s) in traj.states.iter().enumerate() {
            if !self.is_valid(s) {
                return Err(Error::InvalidTrajectory {
                    step: t,
                    reason: format!("state ({}, {}) is not a free cell", s.x, s.y),
                });
            }
        }
        if let Some(actions) = &traj.actions {
            if actions.len() != self.horizon {
                return Err(Error::InvalidTrajectory {
                    step: 0,
                    reason: format!(
                        "expected {} actions for horizon {}, got {}",
                        self.horizon,
                        self.horizon,
                        actions.len()
                    ),
                });
            }
            for (t, (&action, pair)) in actions.iter().zip(traj.states.windows(2)).enumerate() {
                let next = self.successor(pair[0], action)?;
                if next != pair[1] {
                    return Err(Error::InvalidTrajectory {
                        step: t,
                        reason: format!(
                            "action {} leads to ({}, {}), not ({}, {})",
                            action.name(),
                            next.x,
                            next.y,
                            pair[1].x,
                            pair[1].y
                        ),
                    });
                }
            }
        } else {
            for t in 0..self.horizon {
                if self.transition_multiplicity(traj.states[t], traj.states[t + 1])? == 0 {
                    return Err(Error::InvalidTrajectory {
                        step: t,
                        reason: format!(
                            "no action leads from ({}, {}) to ({}, {})",
                            traj.states[t].x,
                            traj.states[t].y,
                            traj.states[t + 1].x,
                            traj.states[t + 1].y
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Check a state prefix `s_0..s_k`: starts at the start cell, within
    /// the horizon, every state free, every step reachable.
    pub fn validate_prefix(&self, prefix: &[State]) -> Result<()> {
        if prefix.is_empty() {
            return Err(Error::InvalidTrajectory {
                step: 0,
                reason: "prefix is empty".to_string(),
            });
        }
        if prefix.len() > self.horizon + 1 {
            return Err(Error::InvalidTrajectory {
                step: 0,
                reason: format!(
                    "prefix of {} states exceeds horizon {} (max {} states)",
                    prefix.len(),
                    self.horizon,
                    self.horizon + 1
                ),
            });
        }
        if prefix[0] != self.start {
            return Err(Error::InvalidTrajectory {
                step: 0,
                reason: format!(
                    "prefix starts at ({}, {}) but the board starts at ({}, {})",
                    prefix[0].x, prefix[0].y, self.start.x, self.start.y
                ),
            });
        }
        for (t, &s) in prefix.iter().enumerate() {
            if !self.is_valid(s) {
                return Err(Error::InvalidTrajectory {
                    step: t,
                    reason: format!("state ({}, {}) is not a free cell", s.x, s.y),
                });
            }
        }
        for t in 0..prefix.len() - 1 {
            if self.transition_multiplicity(prefix[t], prefix[t + 1])? == 0 {
                return Err(Error::InvalidTrajectory {
                    step: t,
                    reason: format!(
                        "no action leads from ({}, {}) to ({}, {})",
                        prefix[t].x,
                        prefix[t].y,
                        prefix[t + 1].x,
                        prefix[t + 1].y
                    ),
                });
            }
        }
        Ok(())
    }

    /// A 64-bit structural fingerprint of the board (dimensions, obstacle
    /// layout, start, goals, horizon, feature map). Two boards that hash
    /// alike here induce the same trajectory distribution for the same
    /// parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.width as u64);
        h.write_u64(self.height as u64);
        for &block in &self.obstacle {
            h.write_u8(block as u8);
        }
        h.write_u64(self.start.x as u64);
        h.write_u64(self.start.y as u64);
        h.write_u64(self.goals.len() as u64);
        for g in &self.goals {
            h.write_u64(g.x as u64);
            h.write_u64(g.y as u64);
        }
        h.write_u64(self.horizon as u64);
        h.write_u8(match self.feature_map {
            FeatureMap::BiasGoalDist => 0,
            FeatureMap::OneHot => 1,
            FeatureMap::GoalIndicators => 2,
        });
        h.finish()
    }
}

/// FNV-1a, used for deterministic structural fingerprints.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u8(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.write_u8(b);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// A full-horizon path: `horizon + 1` states, optionally the actions that
/// produced them, optionally the id of the agent who walked it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Option<Vec<Action>>,
    pub agent_id: Option<String>,
}

impl Trajectory {
    pub fn new(states: Vec<State>) -> Self {
        Trajectory {
            states,
            actions: None,
            agent_id: None,
        }
    }

    pub fn with_actions(states: Vec<State>, actions: Vec<Action>) -> Self {
        Trajectory {
            states,
            actions: Some(actions),
            agent_id: None,
        }
    }

    pub fn with_agent(mut self, id: impl Into<String>) -> Self {
        self.agent_id = Some(id.into());
        self
    }

    /// Number of actions (states minus one).
    pub fn len(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Materialize every action sequence of the board's horizon as a
/// trajectory, in lexicographic action order (`up < down < left < right
/// < stay`, first action most significant). Errors out instead of
/// building more than `cap` trajectories.
pub fn enumerate_trajectories_capped(spec: &GridSpec, cap: u128) -> Result<Vec<Trajectory>> {
    let count = (Action::COUNT as u128)
        .checked_pow(spec.horizon() as u32)
        .ok_or(Error::OracleCapExceeded {
            requested: u128::MAX,
            cap,
        })?;
    if count > cap {
        return Err(Error::OracleCapExceeded {
            requested: count,
            cap,
        });
    }
    let horizon = spec.horizon();
    let mut out = Vec::with_capacity(count as usize);
    for seq in 0..count {
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon);
        let mut cell = spec.cell_index(spec.start());
        states.push(spec.start());
        for t in 0..horizon {
            // Digit t of `seq` in base 5, most significant first.
            let place = (Action::COUNT as u128).pow((horizon - 1 - t) as u32);
            let digit = ((seq / place) % Action::COUNT as u128) as usize;
            let a = Action::from_index(digit).expect("digit is mod 5");
            cell = spec.succ_cell(cell, a);
            states.push(spec.state_of_cell(cell));
            actions.push(a);
        }
        out.push(Trajectory::with_actions(states, actions));
    }
    Ok(out)
}

/// [`enumerate_trajectories_capped`] with the default cap.
pub fn enumerate_trajectories(spec: &GridSpec) -> Result<Vec<Trajectory>> {
    enumerate_trajectories_capped(spec, DEFAULT_ENUMERATION_CAP)
}
