//! Unlock-style gridworld: a single walled room containing a locked door and
//! a key. The agent must pick up the key and toggle the door open.
//!
//! Coordinates are `(x, y)` with `x` growing east and `y` growing south. The
//! outermost ring of cells is wall; every object lives strictly inside it.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policies::{Agent, PolicyError, PolicyRef};

/// Hard cap on episode length.
pub const MAX_EPISODE_STEPS: u32 = 70;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid too small: {width}x{height} (need at least 5x5)")]
    GridTooSmall { width: usize, height: usize },
    #[error("view size must be 3 or 7, got {0}")]
    InvalidViewSize(usize),
    #[error("max_steps must be in 1..={MAX_EPISODE_STEPS}, got {0}")]
    InvalidMaxSteps(u32),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T> = std::result::Result<T, GridError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    fn offset(self, dx: i32, dy: i32) -> Self {
        Pos::new(self.x + dx, self.y + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i % 4]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    pub fn left(self) -> Direction {
        Direction::from_index(self.index() + 3)
    }

    pub fn right(self) -> Direction {
        Direction::from_index(self.index() + 1)
    }
}

/// The six primitive actions, with a stable 0-5 encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    MoveForward = 2,
    PickUp = 3,
    Drop = 4,
    Toggle = 5,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::MoveForward,
        Action::PickUp,
        Action::Drop,
        Action::Toggle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        Action::from_index(v as usize).ok_or_else(|| format!("invalid action code {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DoorState {
    Locked,
    Unlocked,
    Open,
}

/// What a single cell looks like from the agent's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellView {
    Empty,
    Wall,
    Key,
    Door(DoorState),
    OutOfBounds,
}

impl CellView {
    /// Whether the agent may step into this cell.
    pub fn is_passable(self) -> bool {
        matches!(self, CellView::Empty | CellView::Door(DoorState::Open))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_view_size")]
    pub view_size: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_view_size() -> usize {
    7
}

fn default_max_steps() -> u32 {
    MAX_EPISODE_STEPS
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            width: 6,
            height: 6,
            view_size: default_view_size(),
            max_steps: MAX_EPISODE_STEPS,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 5 || self.height < 5 {
            return Err(GridError::GridTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        validate_view_size(self.view_size)?;
        if self.max_steps == 0 || self.max_steps > MAX_EPISODE_STEPS {
            return Err(GridError::InvalidMaxSteps(self.max_steps));
        }
        Ok(())
    }

    /// Interior (non-wall) cells in row-major order.
    pub fn interior_cells(&self) -> Vec<Pos> {
        let mut cells = Vec::with_capacity((self.width - 2) * (self.height - 2));
        for y in 1..self.height as i32 - 1 {
            for x in 1..self.width as i32 - 1 {
                cells.push(Pos::new(x, y));
            }
        }
        cells
    }
}

pub(crate) fn validate_view_size(k: usize) -> Result<()> {
    if k == 3 || k == 7 {
        Ok(())
    } else {
        Err(GridError::InvalidViewSize(k))
    }
}

/// Egocentric K x K view. `cells[row][col]`: row 0 is farthest ahead, the
/// agent sits at `(K - 1, K / 2)` facing up the view.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub view_size: usize,
    pub cells: Vec<Vec<CellView>>,
    pub agent_dir: Direction,
    pub carrying_key: bool,
}

impl Observation {
    /// Cell at `forward` tiles ahead and `right` tiles to the right (negative
    /// is left). `None` outside the view.
    pub fn at(&self, forward: i32, right: i32) -> Option<CellView> {
        let k = self.view_size as i32;
        let half = k / 2;
        if forward < 0 || forward >= k || right < -half || right > half {
            return None;
        }
        let row = (k - 1 - forward) as usize;
        let col = (half + right) as usize;
        Some(self.cells[row][col])
    }

    /// The cell directly in front of the agent.
    pub fn ahead(&self) -> CellView {
        self.at(1, 0).unwrap_or(CellView::OutOfBounds)
    }

    /// Every cell matching `pred`, as `(forward, right, cell)` in raster order.
    pub fn find(&self, pred: impl Fn(CellView) -> bool) -> Vec<(i32, i32, CellView)> {
        let k = self.view_size as i32;
        let half = k / 2;
        let mut found = Vec::new();
        for (row, line) in self.cells.iter().enumerate() {
            for (col, &cell) in line.iter().enumerate() {
                if pred(cell) {
                    found.push((k - 1 - row as i32, col as i32 - half, cell));
                }
            }
        }
        found
    }
}

/// Full (shadow) state of one episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub width: usize,
    pub height: usize,
    pub agent_pos: Pos,
    pub agent_dir: Direction,
    pub key_pos: Option<Pos>,
    pub door_pos: Pos,
    pub door_locked: bool,
    pub door_open: bool,
    pub carrying_key: bool,
    pub step_count: u32,
    pub rng_seed: u64,
}

/// Result of applying one action to a [`GridState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub opened_door: bool,
}

impl GridState {
    /// Uniformly places agent, key and door on distinct interior cells.
    pub fn sample(config: &EnvConfig, seed: u64) -> Result<GridState> {
        config.validate()?;
        let cells = config.interior_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = sample(&mut rng, cells.len(), 3).into_vec();
        let agent_dir = Direction::from_index(rng.gen_range(0..4));
        Ok(GridState {
            width: config.width,
            height: config.height,
            agent_pos: cells[picks[0]],
            agent_dir,
            key_pos: Some(cells[picks[1]]),
            door_pos: cells[picks[2]],
            door_locked: true,
            door_open: false,
            carrying_key: false,
            step_count: 0,
            rng_seed: seed,
        })
    }

    pub fn is_interior(&self, p: Pos) -> bool {
        p.x >= 1 && p.y >= 1 && p.x < self.width as i32 - 1 && p.y < self.height as i32 - 1
    }

    pub fn door_state(&self) -> DoorState {
        if self.door_open {
            DoorState::Open
        } else if self.door_locked {
            DoorState::Locked
        } else {
            DoorState::Unlocked
        }
    }

    pub fn cell_at(&self, p: Pos) -> CellView {
        if p.x < 0 || p.y < 0 || p.x >= self.width as i32 || p.y >= self.height as i32 {
            CellView::OutOfBounds
        } else if !self.is_interior(p) {
            CellView::Wall
        } else if p == self.door_pos {
            CellView::Door(self.door_state())
        } else if self.key_pos == Some(p) {
            CellView::Key
        } else {
            CellView::Empty
        }
    }

    pub fn front_pos(&self) -> Pos {
        let (dx, dy) = self.agent_dir.delta();
        self.agent_pos.offset(dx, dy)
    }

    pub fn observe(&self, view_size: usize) -> Observation {
        let k = view_size as i32;
        let half = k / 2;
        let (fx, fy) = self.agent_dir.delta();
        let (rx, ry) = self.agent_dir.right().delta();
        let cells = (0..k)
            .map(|row| {
                let forward = k - 1 - row;
                (0..k)
                    .map(|col| {
                        let right = col - half;
                        let p = self
                            .agent_pos
                            .offset(forward * fx + right * rx, forward * fy + right * ry);
                        self.cell_at(p)
                    })
                    .collect()
            })
            .collect();
        Observation {
            view_size,
            cells,
            agent_dir: self.agent_dir,
            carrying_key: self.carrying_key,
        }
    }

    /// Applies `action` and advances the step counter. No episode bookkeeping.
    pub fn apply(&mut self, action: Action) -> Transition {
        self.step_count += 1;
        let front = self.front_pos();
        let mut opened_door = false;
        match action {
            Action::TurnLeft => self.agent_dir = self.agent_dir.left(),
            Action::TurnRight => self.agent_dir = self.agent_dir.right(),
            Action::MoveForward => {
                if self.cell_at(front).is_passable() {
                    self.agent_pos = front;
                }
            }
            Action::PickUp => {
                if !self.carrying_key && self.key_pos == Some(front) {
                    self.key_pos = None;
                    self.carrying_key = true;
                }
            }
            Action::Drop => {
                if self.carrying_key && self.cell_at(front) == CellView::Empty {
                    self.key_pos = Some(front);
                    self.carrying_key = false;
                }
            }
            Action::Toggle => {
                if front == self.door_pos && self.door_locked && self.carrying_key {
                    self.door_locked = false;
                    self.door_open = true;
                    opened_door = true;
                }
            }
        }
        Transition { opened_door }
    }
}

/// Reward for opening the door after `step_count` steps.
pub fn success_reward(step_count: u32, max_steps: u32) -> f64 {
    (1.0 - 0.9 * (step_count as f64 / max_steps as f64)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// One running episode.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    state: GridState,
    done: bool,
}

impl Env {
    pub fn reset(config: &EnvConfig, seed: u64) -> Result<Env> {
        let state = GridState::sample(config, seed)?;
        Ok(Env {
            config: *config,
            state,
            done: false,
        })
    }

    /// Resumes from an arbitrary state, e.g. a hand-built fixture.
    pub fn from_state(config: &EnvConfig, state: GridState) -> Result<Env> {
        config.validate()?;
        let done = state.door_open || state.step_count >= config.max_steps;
        Ok(Env {
            config: *config,
            state,
            done,
        })
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observe(&self, view_size: usize) -> Observation {
        self.state.observe(view_size)
    }

    pub fn observation(&self) -> Observation {
        self.observe(self.config.view_size)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        self.step_with_view(action, self.config.view_size)
    }

    pub fn step_with_view(&mut self, action: Action, view_size: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(GridError::EpisodeFinished);
        }
        let t = self.state.apply(action);
        let reward = if t.opened_door {
            success_reward(self.state.step_count, self.config.max_steps)
        } else {
            0.0
        };
        self.done = t.opened_door || self.state.step_count >= self.config.max_steps;
        Ok(StepOutcome {
            next_observation: self.state.observe(view_size),
            reward,
            done: self.done,
        })
    }
}

/// One recorded step: the state and observation the action was chosen from.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub state: GridState,
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub steps: Vec<TraceStep>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn success(&self) -> bool {
        self.steps.last().is_some_and(|s| s.reward > 0.0)
    }
}

/// Runs one episode of `policy` on the layout sampled from `seed`. The
/// observation window is the policy's own view size.
pub fn run_episode(policy: &PolicyRef, config: &EnvConfig, seed: u64) -> Result<EpisodeTrace> {
    let mut env = Env::reset(config, seed)?;
    let view = policy.view_size;
    validate_view_size(view)?;
    let mut agent = Agent::new(*policy, seed);
    let mut obs = env.observe(view);
    let mut steps = Vec::new();
    while !env.is_done() {
        let action = agent.act(&obs)?;
        let state = env.state().clone();
        let out = env.step_with_view(action, view)?;
        steps.push(TraceStep {
            state,
            observation: obs,
            action,
            reward: out.reward,
        });
        obs = out.next_observation;
    }
    Ok(EpisodeTrace { seed, steps })
}
