//! Multi-objective lava gridworld.
//!
//! The agent moves MiniGrid-style (turn left, turn right, forward) on a
//! wall-enclosed grid holding lava tiles and three colored goals. Rewards are
//! three-dimensional, ordered `(goal, lava, time)`:
//!
//! - goal: `R_GOAL * w_color` when stepping onto an uncollected goal;
//! - lava: `-1` for every step that ends on a lava tile (lava never ends the episode);
//! - time: `-1` every step.
//!
//! The episode terminates once every goal present on the grid is collected
//! and is truncated after `max_steps` steps. The standard domain is 11×11
//! with all three goals; smaller grids are accepted for exact-oracle tests.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{sample_simplex_with, RandomStream};
use crate::momdp::{ContextSpace, EnvError, Environment, Transition};

pub const STANDARD_SIZE: usize = 11;
pub const R_GOAL: f64 = 100.0;
pub const NUM_OBJECTIVES: usize = 3;
pub const NUM_ACTIONS: usize = 3;
pub const DEFAULT_MAX_STEPS: usize = 256;
pub const DEFAULT_GAMMA: f64 = 0.995;
const REJECTION_BUDGET: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("grid must be at least 1x1, got {width}x{height}")]
    Empty { width: usize, height: usize },
    #[error("standard layouts are {STANDARD_SIZE}x{STANDARD_SIZE}, got {width}x{height}")]
    NotStandardSize { width: usize, height: usize },
    #[error("row {row} has {found} tiles, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row}, column {col}: unknown tile code {code:?}")]
    UnknownTile { row: usize, col: usize, code: char },
    #[error("goal {0:?} appears more than once")]
    DuplicateGoal(GoalColor),
    #[error("goal {0:?} is missing")]
    MissingGoal(GoalColor),
    #[error("layout has no goals")]
    NoGoals,
    #[error("agent start ({x}, {y}) is out of bounds")]
    AgentOutOfBounds { x: usize, y: usize },
    #[error("agent start ({x}, {y}) is not an empty tile")]
    AgentNotOnEmpty { x: usize, y: usize },
    #[error("unknown direction {0:?}")]
    UnknownDirection(String),
    #[error("goal weights must be nonnegative and sum to 1, got {0:?}")]
    BadWeights([f64; 3]),
    #[error("lava count range {lo}..={hi} does not fit a {width}x{height} grid with 3 goals and the agent")]
    LavaRange {
        lo: usize,
        hi: usize,
        width: usize,
        height: usize,
    },
    #[error("no layout with all goals reachable after {0} attempts")]
    RejectionBudget(usize),
    #[error("malformed context JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GoalColor {
    Green = 0,
    Yellow = 1,
    Blue = 2,
}

impl GoalColor {
    pub const ALL: [GoalColor; 3] = [GoalColor::Green, GoalColor::Yellow, GoalColor::Blue];

    pub fn bit(self) -> u8 {
        1 << self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tile {
    Empty,
    Lava,
    Goal(GoalColor),
}

impl Tile {
    pub fn code(self) -> char {
        match self {
            Tile::Empty => '.',
            Tile::Lava => 'L',
            Tile::Goal(GoalColor::Green) => 'G',
            Tile::Goal(GoalColor::Yellow) => 'Y',
            Tile::Goal(GoalColor::Blue) => 'B',
        }
    }

    pub fn from_code(c: char) -> Option<Tile> {
        Some(match c {
            '.' => Tile::Empty,
            'L' => Tile::Lava,
            'G' => Tile::Goal(GoalColor::Green),
            'Y' => Tile::Goal(GoalColor::Yellow),
            'B' => Tile::Goal(GoalColor::Blue),
            _ => return None,
        })
    }

    /// Categorical code used in observations.
    pub fn category(self) -> u8 {
        match self {
            Tile::Empty => 0,
            Tile::Lava => 1,
            Tile::Goal(c) => 2 + c as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn from_index(i: u8) -> Direction {
        Self::ALL[(i & 3) as usize]
    }

    pub fn right(self) -> Direction {
        Self::from_index(self as u8 + 1)
    }

    pub fn left(self) -> Direction {
        Self::from_index(self as u8 + 3)
    }

    /// `(dx, dy)` with `y` growing southwards.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    pub fn letter(self) -> &'static str {
        ["N", "E", "S", "W"][self as usize]
    }

    pub fn from_letter(s: &str) -> Result<Direction, LayoutError> {
        match s {
            "N" => Ok(Direction::North),
            "E" => Ok(Direction::East),
            "S" => Ok(Direction::South),
            "W" => Ok(Direction::West),
            _ => Err(LayoutError::UnknownDirection(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::TurnLeft, Action::TurnRight, Action::Forward];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        ['L', 'R', 'F'][self as usize]
    }

    pub fn from_letter(c: char) -> Option<Action> {
        match c {
            'L' => Some(Action::TurnLeft),
            'R' => Some(Action::TurnRight),
            'F' => Some(Action::Forward),
            _ => None,
        }
    }
}

/// Grid tiles plus the agent's start pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LavaGridLayout {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    pub agent_start: (usize, usize),
    pub agent_dir: Direction,
}

impl LavaGridLayout {
    /// Builds a layout from rows of tile codes and checks the structural
    /// invariants (rectangular, goals unique, agent on an empty tile).
    pub fn from_rows<S: AsRef<str>>(
        rows: &[S],
        agent_start: (usize, usize),
        agent_dir: Direction,
    ) -> Result<Self, LayoutError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().chars().count());
        if width == 0 || height == 0 {
            return Err(LayoutError::Empty { width, height });
        }
        let mut tiles = Vec::with_capacity(width * height);
        for (row, r) in rows.iter().enumerate() {
            let chars: Vec<char> = r.as_ref().chars().collect();
            if chars.len() != width {
                return Err(LayoutError::Ragged {
                    row,
                    found: chars.len(),
                    expected: width,
                });
            }
            for (col, code) in chars.into_iter().enumerate() {
                tiles.push(Tile::from_code(code).ok_or(LayoutError::UnknownTile {
                    row,
                    col,
                    code,
                })?);
            }
        }
        let layout = Self {
            width,
            height,
            tiles,
            agent_start,
            agent_dir,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tile(&self, x: usize, y: usize) -> Tile {
        self.tiles[y * self.width + x]
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn rows(&self) -> Vec<String> {
        self.tiles
            .chunks(self.width)
            .map(|r| r.iter().map(|t| t.code()).collect())
            .collect()
    }

    pub fn goal_position(&self, color: GoalColor) -> Option<(usize, usize)> {
        self.tiles
            .iter()
            .position(|&t| t == Tile::Goal(color))
            .map(|i| (i % self.width, i / self.width))
    }

    /// Bitmask of the goal colors present on the grid.
    pub fn goal_mask(&self) -> u8 {
        GoalColor::ALL
            .iter()
            .filter(|c| self.goal_position(**c).is_some())
            .fold(0, |m, c| m | c.bit())
    }

    pub fn lava_count(&self) -> usize {
        self.tiles.iter().filter(|&&t| t == Tile::Lava).count()
    }

    /// Structural invariants for any grid size: each goal at most once, at
    /// least one goal, agent in bounds on an empty tile.
    pub fn validate(&self) -> Result<(), LayoutError> {
        for c in GoalColor::ALL {
            if self.tiles.iter().filter(|&&t| t == Tile::Goal(c)).count() > 1 {
                return Err(LayoutError::DuplicateGoal(c));
            }
        }
        if self.goal_mask() == 0 {
            return Err(LayoutError::NoGoals);
        }
        let (x, y) = self.agent_start;
        if x >= self.width || y >= self.height {
            return Err(LayoutError::AgentOutOfBounds { x, y });
        }
        if self.tile(x, y) != Tile::Empty {
            return Err(LayoutError::AgentNotOnEmpty { x, y });
        }
        Ok(())
    }

    /// The standard-domain invariants: 11×11 and exactly one goal of each color.
    pub fn validate_standard(&self) -> Result<(), LayoutError> {
        if self.width != STANDARD_SIZE || self.height != STANDARD_SIZE {
            return Err(LayoutError::NotStandardSize {
                width: self.width,
                height: self.height,
            });
        }
        self.validate_full_goal_set()
    }

    pub fn validate_full_goal_set(&self) -> Result<(), LayoutError> {
        self.validate()?;
        for c in GoalColor::ALL {
            if self.goal_position(c).is_none() {
                return Err(LayoutError::MissingGoal(c));
            }
        }
        Ok(())
    }

    /// Cells reachable from the agent start with in-bounds moves. Lava is
    /// passable; turning is free, so orientation does not matter.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.tiles.len()];
        let (sx, sy) = self.agent_start;
        let mut queue = VecDeque::from([(sx, sy)]);
        seen[sy * self.width + sx] = true;
        while let Some((x, y)) = queue.pop_front() {
            for d in Direction::ALL {
                if let Some((nx, ny)) = self.neighbor(x, y, d) {
                    let i = ny * self.width + nx;
                    if !seen[i] {
                        seen[i] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        seen
    }

    pub fn all_goals_reachable(&self) -> bool {
        let seen = self.reachable();
        GoalColor::ALL
            .iter()
            .filter_map(|&c| self.goal_position(c))
            .all(|(x, y)| seen[y * self.width + x])
    }

    fn neighbor(&self, x: usize, y: usize, d: Direction) -> Option<(usize, usize)> {
        let (dx, dy) = d.delta();
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        (nx < self.width && ny < self.height).then_some((nx, ny))
    }

    /// ASCII picture with the agent drawn as `^ > v <`.
    pub fn render(&self, state: &GridState) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if (x, y) == (state.x as usize, state.y as usize) {
                    out.push(['^', '>', 'v', '<'][state.dir as usize]);
                } else {
                    let t = self.tile(x, y);
                    let collected = matches!(t, Tile::Goal(c) if state.collected & c.bit() != 0);
                    out.push(if collected {
                        t.code().to_ascii_lowercase()
                    } else {
                        t.code()
                    });
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Reward weight of each goal color, `(green, yellow, blue)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct GoalWeights([f64; 3]);

impl GoalWeights {
    pub fn new(w: [f64; 3]) -> Result<Self, LayoutError> {
        let ok = w.iter().all(|x| x.is_finite() && *x >= 0.0)
            && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(LayoutError::BadWeights(w));
        }
        Ok(Self(w))
    }

    pub fn get(&self, c: GoalColor) -> f64 {
        self.0[c as usize]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

impl TryFrom<[f64; 3]> for GoalWeights {
    type Error = LayoutError;

    fn try_from(w: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(w)
    }
}

impl From<GoalWeights> for [f64; 3] {
    fn from(w: GoalWeights) -> Self {
        w.0
    }
}

/// A complete environment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LavaGridContext {
    pub id: String,
    pub layout: Arc<LavaGridLayout>,
    pub weights: GoalWeights,
}

/// Agent pose and collected goals. The environment's Markov state apart from
/// the step counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub x: u8,
    pub y: u8,
    pub dir: Direction,
    pub collected: u8,
}

impl LavaGridContext {
    pub fn new(id: impl Into<String>, layout: LavaGridLayout, weights: GoalWeights) -> Self {
        Self {
            id: id.into(),
            layout: Arc::new(layout),
            weights,
        }
    }

    pub fn initial_state(&self) -> GridState {
        GridState {
            x: self.layout.agent_start.0 as u8,
            y: self.layout.agent_start.1 as u8,
            dir: self.layout.agent_dir,
            collected: 0,
        }
    }

    pub fn is_terminal(&self, s: &GridState) -> bool {
        s.collected == self.layout.goal_mask()
    }

    /// Deterministic dynamics shared by the environment and the oracles.
    pub fn transition(&self, s: &GridState, action: Action) -> (GridState, [f64; 3], bool) {
        let mut next = *s;
        match action {
            Action::TurnLeft => next.dir = s.dir.left(),
            Action::TurnRight => next.dir = s.dir.right(),
            Action::Forward => {
                if let Some((nx, ny)) = self.layout.neighbor(s.x as usize, s.y as usize, s.dir) {
                    next.x = nx as u8;
                    next.y = ny as u8;
                }
            }
        }
        let mut reward = [0.0, 0.0, -1.0];
        match self.layout.tile(next.x as usize, next.y as usize) {
            Tile::Goal(c) if next.collected & c.bit() == 0 => {
                reward[0] = R_GOAL * self.weights.get(c);
                next.collected |= c.bit();
            }
            Tile::Lava => reward[1] = -1.0,
            _ => {}
        }
        let terminal = self.is_terminal(&next);
        (next, reward, terminal)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ContextFile::from(self)).expect("context serializes")
    }

    pub fn from_json(id: impl Into<String>, text: &str) -> Result<Self, LayoutError> {
        let file: ContextFile =
            serde_json::from_str(text).map_err(|e| LayoutError::Json(e.to_string()))?;
        file.into_context(id)
    }
}

/// On-disk context schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextFile {
    pub tiles: Vec<String>,
    pub agent: AgentFile,
    pub weights: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub x: usize,
    pub y: usize,
    pub dir: String,
}

impl From<&LavaGridContext> for ContextFile {
    fn from(c: &LavaGridContext) -> Self {
        ContextFile {
            tiles: c.layout.rows(),
            agent: AgentFile {
                x: c.layout.agent_start.0,
                y: c.layout.agent_start.1,
                dir: c.layout.agent_dir.letter().to_string(),
            },
            weights: c.weights.as_array(),
        }
    }
}

impl ContextFile {
    pub fn into_context(self, id: impl Into<String>) -> Result<LavaGridContext, LayoutError> {
        let dir = Direction::from_letter(&self.agent.dir)?;
        let layout = LavaGridLayout::from_rows(&self.tiles, (self.agent.x, self.agent.y), dir)?;
        let weights = GoalWeights::new(self.weights)?;
        Ok(LavaGridContext::new(id, layout, weights))
    }
}

/// Fully observable observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LavaGridObs {
    /// One [`Tile::category`] per cell, row-major.
    pub tiles: Arc<[u8]>,
    pub width: usize,
    pub x: usize,
    pub y: usize,
    pub dir: Direction,
    /// Goal weights still on offer; zero once a goal has been collected.
    pub remaining_weights: [f64; 3],
    /// Collected-goal bitmask (green, yellow, blue). Mirrors the zeroed weight
    /// channel, and stays meaningful for goals whose weight was zero to begin with.
    pub collected: u8,
}

impl LavaGridObs {
    pub fn state(&self) -> GridState {
        GridState {
            x: self.x as u8,
            y: self.y as u8,
            dir: self.dir,
            collected: self.collected,
        }
    }
}

/// The gridworld as an [`Environment`].
#[derive(Debug, Clone)]
pub struct LavaGridEnv {
    max_steps: usize,
    context: Option<LavaGridContext>,
    tiles: Arc<[u8]>,
    state: GridState,
    steps: usize,
    done: bool,
}

impl LavaGridEnv {
    pub fn new(max_steps: usize) -> Self {
        Self {
            max_steps,
            context: None,
            tiles: Arc::from(Vec::new()),
            state: GridState {
                x: 0,
                y: 0,
                dir: Direction::North,
                collected: 0,
            },
            steps: 0,
            done: false,
        }
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn observe(&self) -> LavaGridObs {
        let ctx = self.context.as_ref().expect("observed after reset");
        let mut remaining = ctx.weights.as_array();
        for c in GoalColor::ALL {
            if self.state.collected & c.bit() != 0 {
                remaining[c as usize] = 0.0;
            }
        }
        LavaGridObs {
            tiles: self.tiles.clone(),
            width: ctx.layout.width(),
            x: self.state.x as usize,
            y: self.state.y as usize,
            dir: self.state.dir,
            remaining_weights: remaining,
            collected: self.state.collected,
        }
    }
}

impl Default for LavaGridEnv {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_STEPS)
    }
}

impl Environment for LavaGridEnv {
    type Context = LavaGridContext;
    type Observation = LavaGridObs;

    fn reset(
        &mut self,
        context: &LavaGridContext,
        _stream: RandomStream,
    ) -> Result<LavaGridObs, EnvError> {
        context
            .layout
            .validate()
            .map_err(|e| EnvError::InvalidContext(e.to_string()))?;
        if context.layout.width() > u8::MAX as usize || context.layout.height() > u8::MAX as usize {
            return Err(EnvError::InvalidContext(
                "grid larger than 255 cells per side".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(EnvError::ZeroSteps);
        }
        if self
            .context
            .as_ref()
            .is_none_or(|c| !Arc::ptr_eq(&c.layout, &context.layout))
        {
            self.tiles = context
                .layout
                .tiles()
                .iter()
                .map(|t| t.category())
                .collect();
        }
        self.context = Some(context.clone());
        self.state = context.initial_state();
        self.steps = 0;
        self.done = false;
        Ok(self.observe())
    }

    fn step(&mut self, action: usize) -> Result<Transition<LavaGridObs>, EnvError> {
        let ctx = self.context.as_ref().ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let act = Action::from_index(action).ok_or(EnvError::InvalidAction {
            action,
            count: NUM_ACTIONS,
        })?;
        let (next, reward, terminal) = ctx.transition(&self.state, act);
        self.state = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        Ok(Transition {
            next_observation: self.observe(),
            reward: reward.to_vec(),
            terminal,
            truncated,
        })
    }

    fn num_objectives(&self) -> usize {
        NUM_OBJECTIVES
    }

    fn action_count(&self) -> usize {
        NUM_ACTIONS
    }
}

/// Samples a layout with lava count uniform in `lava_lo..=lava_hi` and the
/// goals, agent and lava on distinct uniformly chosen cells.
pub fn random_layout_with<R: Rng + ?Sized>(
    rng: &mut R,
    width: usize,
    height: usize,
    lava_lo: usize,
    lava_hi: usize,
) -> Result<LavaGridLayout, LayoutError> {
    let cells = width * height;
    if width == 0 || height == 0 || width > u8::MAX as usize || height > u8::MAX as usize {
        return Err(LayoutError::Empty { width, height });
    }
    if lava_lo > lava_hi || lava_hi + 4 > cells {
        return Err(LayoutError::LavaRange {
            lo: lava_lo,
            hi: lava_hi,
            width,
            height,
        });
    }
    let mut order: Vec<usize> = (0..cells).collect();
    for _ in 0..REJECTION_BUDGET {
        let lava = rng.gen_range(lava_lo..=lava_hi);
        order.shuffle(rng);
        let mut tiles = vec![Tile::Empty; cells];
        for (c, &i) in GoalColor::ALL.iter().zip(&order[..3]) {
            tiles[i] = Tile::Goal(*c);
        }
        let agent = order[3];
        for &i in &order[4..4 + lava] {
            tiles[i] = Tile::Lava;
        }
        let dir = Direction::ALL[rng.gen_range(0..4)];
        let layout = LavaGridLayout {
            width,
            height,
            tiles,
            agent_start: (agent % width, agent / width),
            agent_dir: dir,
        };
        if layout.all_goals_reachable() {
            return Ok(layout);
        }
    }
    Err(LayoutError::RejectionBudget(REJECTION_BUDGET))
}

pub fn random_layout(
    stream: RandomStream,
    width: usize,
    height: usize,
    lava_lo: usize,
    lava_hi: usize,
) -> Result<LavaGridLayout, LayoutError> {
    random_layout_with(&mut stream.rng(), width, height, lava_lo, lava_hi)
}

/// Domain-randomization space: grid size, lava count range, and whether the
/// goal weights are drawn from the simplex (otherwise `fixed_weights`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LavaGridSpace {
    pub width: usize,
    pub height: usize,
    pub lava_min: usize,
    pub lava_max: usize,
    #[serde(default)]
    pub fixed_weights: Option<[f64; 3]>,
}

impl LavaGridSpace {
    pub fn standard() -> Self {
        Self {
            width: STANDARD_SIZE,
            height: STANDARD_SIZE,
            lava_min: 0,
            lava_max: 30,
            fixed_weights: None,
        }
    }
}

impl ContextSpace for LavaGridSpace {
    type Context = LavaGridContext;
    type Error = LayoutError;

    fn sample(&self, stream: RandomStream) -> Result<LavaGridContext, LayoutError> {
        let mut rng = stream.rng();
        let layout = random_layout_with(
            &mut rng,
            self.width,
            self.height,
            self.lava_min,
            self.lava_max,
        )?;
        let weights = match self.fixed_weights {
            Some(w) => GoalWeights::new(w)?,
            None => {
                let w = sample_simplex_with(&mut rng, 3).expect("k = 3");
                let s = w.as_slice();
                GoalWeights::new([s[0], s[1], s[2]])?
            }
        };
        Ok(LavaGridContext::new(
            format!("dr-{:016x}", stream.stream_id),
            layout,
            weights,
        ))
    }
}

/// Randomizes lava count, lava placement and (optionally) goal weights
/// around a fixed base: the base's goals and agent start are kept and its
/// own lava is ignored. A learner that keys on pose alone can still transfer
/// across this family, which makes it the useful randomization for small
/// tabular experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LavaPlacementSpace {
    pub tiles: Vec<String>,
    pub agent: AgentFile,
    pub lava_min: usize,
    pub lava_max: usize,
    #[serde(default)]
    pub fixed_weights: Option<[f64; 3]>,
}

impl LavaPlacementSpace {
    pub fn base_layout(&self) -> Result<LavaGridLayout, LayoutError> {
        let dir = Direction::from_letter(&self.agent.dir)?;
        LavaGridLayout::from_rows(&self.tiles, (self.agent.x, self.agent.y), dir)
    }

    pub fn dims(&self) -> (usize, usize) {
        (
            self.tiles.first().map_or(0, |r| r.chars().count()),
            self.tiles.len(),
        )
    }
}

impl ContextSpace for LavaPlacementSpace {
    type Context = LavaGridContext;
    type Error = LayoutError;

    fn sample(&self, stream: RandomStream) -> Result<LavaGridContext, LayoutError> {
        let base = self.base_layout()?;
        let (w, h) = (base.width, base.height);
        let start = base.agent_start.1 * w + base.agent_start.0;
        let mut free: Vec<usize> = (0..w * h)
            .filter(|&i| i != start && !matches!(base.tiles[i], Tile::Goal(_)))
            .collect();
        if self.lava_min > self.lava_max || self.lava_max > free.len() {
            return Err(LayoutError::LavaRange {
                lo: self.lava_min,
                hi: self.lava_max,
                width: w,
                height: h,
            });
        }
        let mut rng = stream.rng();
        let mut chosen = None;
        for _ in 0..REJECTION_BUDGET {
            let lava = rng.gen_range(self.lava_min..=self.lava_max);
            free.shuffle(&mut rng);
            let mut tiles: Vec<Tile> = base
                .tiles
                .iter()
                .map(|t| if *t == Tile::Lava { Tile::Empty } else { *t })
                .collect();
            for &i in &free[..lava] {
                tiles[i] = Tile::Lava;
            }
            let layout = LavaGridLayout {
                tiles,
                ..base.clone()
            };
            if layout.all_goals_reachable() {
                chosen = Some(layout);
                break;
            }
        }
        let layout = chosen.ok_or(LayoutError::RejectionBudget(REJECTION_BUDGET))?;
        let weights = match self.fixed_weights {
            Some(w) => GoalWeights::new(w)?,
            None => {
                let w = sample_simplex_with(&mut rng, 3).expect("k = 3");
                let s = w.as_slice();
                GoalWeights::new([s[0], s[1], s[2]])?
            }
        };
        Ok(LavaGridContext::new(
            format!("dr-{:016x}", stream.stream_id),
            layout,
            weights,
        ))
    }
}

/// The randomization spaces a generalist can be trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomizationSpace {
    Layouts(LavaGridSpace),
    LavaPlacement(LavaPlacementSpace),
}

impl RandomizationSpace {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            RandomizationSpace::Layouts(s) => (s.width, s.height),
            RandomizationSpace::LavaPlacement(s) => s.dims(),
        }
    }
}

impl ContextSpace for RandomizationSpace {
    type Context = LavaGridContext;
    type Error = LayoutError;

    fn sample(&self, stream: RandomStream) -> Result<LavaGridContext, LayoutError> {
        match self {
            RandomizationSpace::Layouts(s) => s.sample(stream),
            RandomizationSpace::LavaPlacement(s) => s.sample(stream),
        }
    }
}

impl fmt::Display for LavaGridContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.weights.as_array();
        writeln!(f, "{} weights g={} y={} b={}", self.id, w[0], w[1], w[2])?;
        write!(f, "{}", self.layout.render(&self.initial_state()))
    }
}

struct Builtin {
    name: &'static str,
    weights: [f64; 3],
    rows: [&'static str; 11],
    agent: (usize, usize),
    dir: Direction,
}

const THIRD: f64 = 1.0 / 3.0;

const BUILTINS: [Builtin; 8] = [
    Builtin {
        name: "Snake",
        weights: [0.20, 0.30, 0.50],
        rows: [
            "Y..........",
            "LLLLLLLL...",
            "...........",
            "...LLLLLLLL",
            "...........",
            "LLLLLLLL...",
            ".....B.....",
            "...LLLLLLLL",
            "...........",
            "LLLLLLLL...",
            "G..........",
        ],
        agent: (10, 10),
        dir: Direction::North,
    },
    Builtin {
        name: "Room",
        weights: [0.50, 0.30, 0.20],
        rows: [
            "...........",
            ".LLLLLLLLL.",
            ".L.......L.",
            ".L..G....L.",
            ".L.......L.",
            ".L...Y...L.",
            ".L.......L.",
            ".L.....B.L.",
            ".L.......L.",
            ".LLLL.LLLL.",
            "...........",
        ],
        agent: (5, 10),
        dir: Direction::North,
    },
    Builtin {
        name: "Smiley",
        weights: [0.40, 0.40, 0.20],
        rows: [
            "...........",
            "...........",
            "..LL...LL..",
            "..LL...LL..",
            "...........",
            ".....G.....",
            ".L.......L.",
            "..L.....L..",
            "...LLLLL...",
            ".Y.......B.",
            "...........",
        ],
        agent: (5, 10),
        dir: Direction::North,
    },
    Builtin {
        name: "Maze",
        weights: [0.05, 0.05, 0.90],
        rows: [
            ".....L.....",
            ".LLL.L.LLL.",
            ".L...L...L.",
            ".L.LLLLL.L.",
            ".L.L.G.L.L.",
            "...L...L...",
            "LL.LL.LL.LL",
            ".........Y.",
            ".LLLLL.LLL.",
            ".L.B.L...L.",
            "...L...L...",
        ],
        agent: (0, 10),
        dir: Direction::East,
    },
    Builtin {
        name: "CheckerBoard",
        weights: [0.30, 0.10, 0.60],
        rows: [
            "...........",
            "...........",
            "..L.L.L.L..",
            "...L.L.L...",
            "..LGL.L.L..",
            "...L.L.L...",
            "..L.L.LYL..",
            "...L.L.L...",
            "..L.LBL.L..",
            "...........",
            "...........",
        ],
        agent: (0, 0),
        dir: Direction::East,
    },
    Builtin {
        name: "Corridor",
        weights: [0.60, 0.10, 0.30],
        rows: [
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
            "...........",
            "G.........B",
            ".....Y.....",
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
        ],
        agent: (5, 5),
        dir: Direction::North,
    },
    Builtin {
        name: "Islands",
        weights: [THIRD, THIRD, THIRD],
        rows: [
            "LLLLLLLLLLL",
            "L...LLL...L",
            "L.G.LLL.Y.L",
            "L...LLL...L",
            "LLLLLLLLLLL",
            "LLLL...LLLL",
            "LLLL...LLLL",
            "LLLL.B.LLLL",
            "LLLL...LLLL",
            "LLLLLLLLLLL",
            "LLLLLLLLLLL",
        ],
        agent: (5, 5),
        dir: Direction::North,
    },
    Builtin {
        name: "Labyrinth",
        weights: [0.50, 0.05, 0.45],
        rows: [
            "...........",
            ".LLLLL.LLL.",
            ".L.......L.",
            ".L.LLLLL.L.",
            ".L.L...L.L.",
            ".L.L.G.L.L.",
            ".L.L...L.L.",
            ".L.LL.LL.L.",
            ".L...Y...L.",
            ".LLLLLLL.L.",
            "....B......",
        ],
        agent: (0, 0),
        dir: Direction::South,
    },
];

/// Names of the eight evaluation layouts, in presentation order.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|b| b.name).collect()
}

/// The eight named evaluation contexts.
pub fn builtin_eval_contexts() -> Vec<(String, LavaGridContext)> {
    BUILTINS
        .iter()
        .map(|b| {
            let layout = LavaGridLayout::from_rows(&b.rows, b.agent, b.dir)
                .expect("builtin layouts are valid");
            let weights = GoalWeights::new(b.weights).expect("builtin weights are valid");
            (
                b.name.to_string(),
                LavaGridContext::new(b.name, layout, weights),
            )
        })
        .collect()
}

/// Looks up a builtin context by name (case-insensitive).
pub fn builtin_context(name: &str) -> Option<LavaGridContext> {
    builtin_eval_contexts()
        .into_iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momdp::rollout_episode;

    const S: RandomStream = RandomStream {
        base_seed: 0,
        stream_id: 0,
    };

    fn open_grid(weights: [f64; 3]) -> LavaGridContext {
        let rows = [".....", ".G...", "..Y..", "...B.", "....."];
        LavaGridContext::new(
            "open",
            LavaGridLayout::from_rows(&rows, (0, 0), Direction::East).unwrap(),
            GoalWeights::new(weights).unwrap(),
        )
    }

    #[test]
    fn reset_reports_pose_and_weights() {
        let ctx = open_grid([0.5, 0.3, 0.2]);
        let mut env = LavaGridEnv::default();
        let obs = env.reset(&ctx, S).unwrap();
        assert_eq!((obs.x, obs.y, obs.dir), (0, 0, Direction::East));
        assert_eq!(obs.remaining_weights, [0.5, 0.3, 0.2]);
        assert_eq!(obs.tiles.len(), 25);
        assert_eq!(env.reset(&ctx, S).unwrap(), obs);
    }

    #[test]
    fn step_rewards() {
        let rows = ["..G..", "L.Y..", "B...."];
        let ctx = LavaGridContext::new(
            "t",
            LavaGridLayout::from_rows(&rows, (1, 0), Direction::East).unwrap(),
            GoalWeights::new([0.5, 0.3, 0.2]).unwrap(),
        );
        let mut env = LavaGridEnv::default();
        env.reset(&ctx, S).unwrap();
        let t = env.step(Action::Forward as usize).unwrap();
        assert_eq!(t.reward, vec![50.0, 0.0, -1.0]);
        assert_eq!(t.next_observation.remaining_weights, [0.0, 0.3, 0.2]);
        // going back over the collected goal pays nothing
        env.step(Action::TurnLeft as usize).unwrap();
        env.step(Action::TurnLeft as usize).unwrap();
        let t = env.step(Action::Forward as usize).unwrap();
        assert_eq!(t.reward, vec![0.0, 0.0, -1.0]);
        // onto lava, then turning in place on it
        env.step(Action::Forward as usize).unwrap();
        env.step(Action::TurnLeft as usize).unwrap();
        let t = env.step(Action::Forward as usize).unwrap();
        assert_eq!(t.next_observation.state().x, 0);
        assert_eq!(t.next_observation.state().y, 1);
        assert_eq!(t.reward, vec![0.0, -1.0, -1.0]);
        let t = env.step(Action::TurnLeft as usize).unwrap();
        assert_eq!(t.reward, vec![0.0, -1.0, -1.0]);
    }

    #[test]
    fn empty_cell_and_boundary() {
        let ctx = open_grid([1.0, 0.0, 0.0]);
        let mut env = LavaGridEnv::default();
        env.reset(&ctx, S).unwrap();
        let t = env.step(Action::Forward as usize).unwrap();
        assert_eq!(t.reward, vec![0.0, 0.0, -1.0]);
        assert_eq!(t.next_observation.x, 1);
        // facing north on the top row: blocked
        env.step(Action::TurnLeft as usize).unwrap();
        let t = env.step(Action::Forward as usize).unwrap();
        assert_eq!((t.next_observation.x, t.next_observation.y), (1, 0));
    }

    #[test]
    fn terminal_after_all_goals_and_truncation() {
        let ctx = LavaGridContext::new(
            "row",
            LavaGridLayout::from_rows(&["...", "GYB"], (0, 0), Direction::South).unwrap(),
            GoalWeights::new([0.2, 0.3, 0.5]).unwrap(),
        );
        let mut env = LavaGridEnv::new(10);
        let actions = [2, 0, 2, 2];
        let ep = rollout_episode(
            &mut env,
            crate::momdp::replay_policy(&actions),
            &ctx,
            0.9,
            S,
            100,
        )
        .unwrap();
        assert!(ep.terminal);
        assert_eq!(ep.len(), 4);
        let goal_total: f64 = ep.rewards.iter().map(|r| r[0]).sum();
        assert!((goal_total - R_GOAL).abs() < 1e-9);
        assert_eq!(env.step(0), Err(EnvError::EpisodeOver));

        let mut short = LavaGridEnv::new(3);
        let ep = rollout_episode(&mut short, |_| 0, &ctx, 0.9, S, 100).unwrap();
        assert!(ep.truncated && !ep.terminal);
        assert_eq!(ep.len(), 3);
        assert_eq!(ep.rewards.iter().map(|r| r[2]).sum::<f64>(), -3.0);
    }

    #[test]
    fn turning_algebra() {
        for d in Direction::ALL {
            assert_eq!(d.left().left().left().left(), d);
            assert_eq!(d.right().right().right().right(), d);
            assert_eq!(d.left().right(), d);
        }
    }

    #[test]
    fn builtins_match_weight_table() {
        let expected: [(&str, [f64; 3]); 8] = [
            ("Snake", [0.20, 0.30, 0.50]),
            ("Room", [0.50, 0.30, 0.20]),
            ("Smiley", [0.40, 0.40, 0.20]),
            ("Maze", [0.05, 0.05, 0.90]),
            ("CheckerBoard", [0.30, 0.10, 0.60]),
            ("Corridor", [0.60, 0.10, 0.30]),
            ("Islands", [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
            ("Labyrinth", [0.50, 0.05, 0.45]),
        ];
        let ctxs = builtin_eval_contexts();
        assert_eq!(ctxs.len(), 8);
        for ((name, ctx), (ename, ew)) in ctxs.iter().zip(expected) {
            assert_eq!(name, ename);
            assert_eq!(ctx.weights.as_array(), ew);
            ctx.layout.validate_standard().unwrap();
            assert!(ctx.layout.all_goals_reachable());
        }
        assert_eq!(
            builtin_context("maze").unwrap().weights.as_array(),
            [0.05, 0.05, 0.90]
        );
        assert!(builtin_context("nowhere").is_none());
    }

    #[test]
    fn json_round_trip_and_errors() {
        for (_, ctx) in builtin_eval_contexts() {
            let back = LavaGridContext::from_json(ctx.id.clone(), &ctx.to_json()).unwrap();
            assert_eq!(back, ctx);
        }
        let bad_tile = r#"{"tiles":["..X"],"agent":{"x":0,"y":0,"dir":"N"},"weights":[1,0,0]}"#;
        assert!(matches!(
            LavaGridContext::from_json("x", bad_tile),
            Err(LayoutError::UnknownTile { .. })
        ));
        let ragged = r#"{"tiles":["..G","."],"agent":{"x":0,"y":0,"dir":"N"},"weights":[1,0,0]}"#;
        assert!(matches!(
            LavaGridContext::from_json("x", ragged),
            Err(LayoutError::Ragged { .. })
        ));
        let bad_w = r#"{"tiles":["..G"],"agent":{"x":0,"y":0,"dir":"N"},"weights":[0.5,0,0]}"#;
        assert!(matches!(
            LavaGridContext::from_json("x", bad_w),
            Err(LayoutError::BadWeights(_))
        ));
        let on_goal = r#"{"tiles":["..G"],"agent":{"x":2,"y":0,"dir":"N"},"weights":[1,0,0]}"#;
        assert!(matches!(
            LavaGridContext::from_json("x", on_goal),
            Err(LayoutError::AgentNotOnEmpty { .. })
        ));
        assert!(matches!(
            LavaGridContext::from_json("x", "{"),
            Err(LayoutError::Json(_))
        ));
    }

    #[test]
    fn random_layouts() {
        let none = random_layout(RandomStream::new(4, 4), 11, 11, 0, 0).unwrap();
        assert_eq!(none.lava_count(), 0);
        for i in 0..200 {
            let l = random_layout(RandomStream::new(1, i), 11, 11, 0, 40).unwrap();
            l.validate_standard().unwrap();
            assert!(l.lava_count() <= 40);
        }
        assert!(matches!(
            random_layout(S, 2, 2, 1, 1),
            Err(LayoutError::LavaRange { .. })
        ));
        assert!(random_layout(S, 2, 2, 0, 0).is_ok());
    }

    #[test]
    fn render_marks_agent() {
        let ctx = open_grid([1.0, 0.0, 0.0]);
        let pic = ctx.layout.render(&ctx.initial_state());
        assert!(pic.starts_with(">...."));
        assert_eq!(pic.lines().count(), 5);
    }

    #[test]
    fn lava_placement_keeps_goals_and_start() {
        let space = LavaPlacementSpace {
            tiles: vec![
                ".....".into(),
                ".G.Y.".into(),
                "..L..".into(),
                "..B..".into(),
                ".....".into(),
            ],
            agent: AgentFile {
                x: 2,
                y: 4,
                dir: "N".into(),
            },
            lava_min: 3,
            lava_max: 8,
            fixed_weights: None,
        };
        let base = space.base_layout().unwrap();
        for i in 0..50 {
            let c = space.sample(RandomStream::new(9, i)).unwrap();
            assert!((3..=8).contains(&c.layout.lava_count()));
            assert_eq!(c.layout.agent_start, (2, 4));
            assert_eq!(c.layout.agent_dir, Direction::North);
            for color in GoalColor::ALL {
                assert_eq!(c.layout.goal_position(color), base.goal_position(color));
            }
            assert!(c.layout.all_goals_reachable());
            assert_eq!(c, space.sample(RandomStream::new(9, i)).unwrap());
        }
        let wrapped = RandomizationSpace::LavaPlacement(space.clone());
        assert_eq!(wrapped.dims(), (5, 5));
        assert_eq!(
            wrapped.sample(RandomStream::new(9, 3)).unwrap(),
            space.sample(RandomStream::new(9, 3)).unwrap()
        );
        let json = serde_json::to_string(&wrapped).unwrap();
        assert!(json.contains("\"kind\":\"lava_placement\""));
        assert_eq!(
            serde_json::from_str::<RandomizationSpace>(&json).unwrap(),
            wrapped
        );
        let too_much = LavaPlacementSpace {
            lava_max: 22,
            ..space
        };
        assert!(matches!(
            too_much.sample(S),
            Err(LayoutError::LavaRange { .. })
        ));
    }
}
