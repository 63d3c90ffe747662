//! Scripted agents: a goal-directed planner with a wide view, a myopic
//! wall-follower with a 3x3 view, and a uniform random agent.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Action, CellView, DoorState, Observation};
use crate::util::mix_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("view size mismatch: policy expects {expected}x{expected}, observation is {actual}x{actual}")]
    ViewSizeMismatch { expected: usize, actual: usize },
    #[error("unknown policy '{0}' (expected goal, short or random)")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    GoalDirected,
    ShortSighted,
    Random,
}

impl PolicyKind {
    pub fn view_size(self) -> usize {
        match self {
            PolicyKind::GoalDirected | PolicyKind::Random => 7,
            PolicyKind::ShortSighted => 3,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            PolicyKind::GoalDirected => "goal",
            PolicyKind::ShortSighted => "short",
            PolicyKind::Random => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "goal" | "goal_directed" => Ok(PolicyKind::GoalDirected),
            "short" | "short_sighted" => Ok(PolicyKind::ShortSighted),
            "random" => Ok(PolicyKind::Random),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }
}

/// Identifies a policy and its fixed observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyRef {
    pub kind: PolicyKind,
    pub view_size: usize,
    /// Only meaningful for [`PolicyKind::Random`].
    #[serde(default)]
    pub rng_seed: u64,
}

impl PolicyRef {
    pub fn new(kind: PolicyKind, rng_seed: u64) -> Self {
        PolicyRef {
            kind,
            view_size: kind.view_size(),
            rng_seed,
        }
    }

    pub fn goal_directed() -> Self {
        Self::new(PolicyKind::GoalDirected, 0)
    }

    pub fn short_sighted() -> Self {
        Self::new(PolicyKind::ShortSighted, 0)
    }

    pub fn random(rng_seed: u64) -> Self {
        Self::new(PolicyKind::Random, rng_seed)
    }
}

#[derive(Debug, Clone)]
enum Brain {
    GoalDirected { plan: VecDeque<Action>, scan_step: u8 },
    ShortSighted,
    Random { rng: Box<ChaCha8Rng> },
}

/// A policy instance owned by one episode.
#[derive(Debug, Clone)]
pub struct Agent {
    policy: PolicyRef,
    brain: Brain,
}

impl Agent {
    /// `episode_seed` only affects the random agent, whose stream is derived
    /// from both its own seed and the episode seed.
    pub fn new(policy: PolicyRef, episode_seed: u64) -> Self {
        let brain = match policy.kind {
            PolicyKind::GoalDirected => Brain::GoalDirected {
                plan: VecDeque::new(),
                scan_step: 0,
            },
            PolicyKind::ShortSighted => Brain::ShortSighted,
            PolicyKind::Random => Brain::Random {
                rng: Box::new(ChaCha8Rng::seed_from_u64(mix_seed(policy.rng_seed, episode_seed))),
            },
        };
        Agent { policy, brain }
    }

    pub fn policy(&self) -> &PolicyRef {
        &self.policy
    }

    pub fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        if obs.view_size != self.policy.view_size {
            return Err(PolicyError::ViewSizeMismatch {
                expected: self.policy.view_size,
                actual: obs.view_size,
            });
        }
        Ok(match &mut self.brain {
            Brain::GoalDirected { plan, scan_step } => goal_directed(obs, plan, scan_step),
            Brain::ShortSighted => short_sighted(obs),
            Brain::Random { rng } => Action::ALL[rng.gen_range(0..Action::ALL.len())],
        })
    }
}

fn is_target(cell: CellView, carrying: bool) -> bool {
    if carrying {
        cell == CellView::Door(DoorState::Locked)
    } else {
        cell == CellView::Key
    }
}

fn interaction(carrying: bool) -> Action {
    if carrying {
        Action::Toggle
    } else {
        Action::PickUp
    }
}

fn goal_directed(obs: &Observation, plan: &mut VecDeque<Action>, scan_step: &mut u8) -> Action {
    if let Some(a) = plan.pop_front() {
        return a;
    }
    let carrying = obs.carrying_key;
    let targets = obs.find(|c| is_target(c, carrying));
    // nearest target first; `find` is raster ordered so ties stay deterministic
    let nearest = targets
        .iter()
        .min_by_key(|(f, r, _)| f.abs() + r.abs())
        .map(|&(f, r, _)| (f, r));
    if let Some(target) = nearest {
        if let Some(route) = plan_route(obs, target) {
            plan.extend(route);
            plan.push_back(interaction(carrying));
            *scan_step = 0;
            return plan.pop_front().expect("plan has at least the interaction");
        }
    }
    let step = *scan_step;
    *scan_step = (*scan_step + 1) % 3;
    match step {
        0 | 1 => Action::TurnLeft,
        _ if obs.ahead().is_passable() => Action::MoveForward,
        _ => Action::TurnLeft,
    }
}

/// Heading in the observation frame: 0 = up the view, then clockwise.
fn heading_delta(h: u8) -> (i32, i32) {
    match h {
        0 => (1, 0),
        1 => (0, 1),
        2 => (-1, 0),
        _ => (0, -1),
    }
}

/// Shortest turn/move sequence through visible empty cells that ends facing
/// `target` (given as `(forward, right)`).
fn plan_route(obs: &Observation, target: (i32, i32)) -> Option<Vec<Action>> {
    type Pose = (i32, i32, u8);
    let start: Pose = (0, 0, 0);
    let faces_target = |(f, r, h): Pose| {
        let (df, dr) = heading_delta(h);
        (f + df, r + dr) == target
    };
    let mut parent: HashMap<Pose, (Pose, Action)> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    let mut goal = None;
    while let Some(pose) = queue.pop_front() {
        if faces_target(pose) {
            goal = Some(pose);
            break;
        }
        let (f, r, h) = pose;
        let (df, dr) = heading_delta(h);
        let moves = [
            (Action::MoveForward, (f + df, r + dr, h)),
            (Action::TurnLeft, (f, r, (h + 3) % 4)),
            (Action::TurnRight, (f, r, (h + 1) % 4)),
        ];
        for (action, next) in moves {
            if action == Action::MoveForward
                && !obs.at(next.0, next.1).is_some_and(|c| c == CellView::Empty)
            {
                continue;
            }
            if next == start || parent.contains_key(&next) {
                continue;
            }
            parent.insert(next, (pose, action));
            queue.push_back(next);
        }
    }
    let mut pose = goal?;
    let mut route = Vec::new();
    while pose != start {
        let (prev, action) = parent[&pose];
        route.push(action);
        pose = prev;
    }
    route.reverse();
    Some(route)
}

fn turn_towards(right: i32) -> Action {
    if right < 0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

fn short_sighted(obs: &Observation) -> Action {
    let carrying = obs.carrying_key;
    let ahead = obs.ahead();
    if is_target(ahead, carrying) {
        return interaction(carrying);
    }
    let free = ahead.is_passable();
    if let Some(&(f, r, _)) = obs.find(|c| is_target(c, carrying)).first() {
        if f == 0 {
            return turn_towards(r);
        }
        if free {
            return Action::MoveForward;
        }
        return if r == 0 { Action::TurnRight } else { turn_towards(r) };
    }
    if free {
        Action::MoveForward
    } else {
        Action::TurnRight
    }
}
