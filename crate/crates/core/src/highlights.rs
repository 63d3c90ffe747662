//! HIGHLIGHTS and HIGHLIGHTS-DIV demonstration summaries.
//!
//! State importance is `max_a Q(s, a) - min_a Q(s, a)`. Q-values come from
//! value iteration on the fully observable gridworld MDP (reward 1 for
//! opening the door, discount `gamma`). Greedy traces are streamed through an
//! online selector that keeps at most `budget` trajectory windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::captioner::{caption_action, caption_observation};
use crate::gridworld::{Action, Direction, DoorState, Env, EnvConfig, GridError, GridState, Pos};

/// Reward used by value iteration for the door-opening transition.
pub const OPEN_REWARD: f64 = 1.0;
/// Largest grid side value iteration will enumerate.
pub const MAX_GRID_SIDE: usize = 8;

#[derive(Debug, Error)]
pub enum HighlightError {
    #[error("state space too large: {width}x{height} grid (limit {MAX_GRID_SIDE}x{MAX_GRID_SIDE})")]
    StateSpaceTooLarge { width: usize, height: usize },
    #[error("gamma must be in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid highlight parameters: {0}")]
    InvalidParams(String),
    #[error("state is not covered by the Q-table")]
    UnknownState,
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type Result<T> = std::result::Result<T, HighlightError>;

/// Canonical fully observable state, independent of the step counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey {
    pub agent_pos: Pos,
    pub agent_dir: Direction,
    pub carrying_key: bool,
    pub door_locked: bool,
    pub door_open: bool,
    pub key_pos: Option<Pos>,
    pub door_pos: Pos,
}

impl StateKey {
    pub fn of(state: &GridState) -> StateKey {
        StateKey {
            agent_pos: state.agent_pos,
            agent_dir: state.agent_dir,
            carrying_key: state.carrying_key,
            door_locked: state.door_locked,
            door_open: state.door_open,
            key_pos: state.key_pos,
            door_pos: state.door_pos,
        }
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

    fn to_state(self, width: usize, height: usize) -> GridState {
        GridState {
            width,
            height,
            agent_pos: self.agent_pos,
            agent_dir: self.agent_dir,
            key_pos: self.key_pos,
            door_pos: self.door_pos,
            door_locked: self.door_locked,
            door_open: self.door_open,
            carrying_key: self.carrying_key,
            step_count: 0,
            rng_seed: 0,
        }
    }
}

/// Hamming distance over (x, y, facing, carrying, door state), equal weights.
pub fn hamming_distance(a: &StateKey, b: &StateKey) -> f64 {
    [
        a.agent_pos.x != b.agent_pos.x,
        a.agent_pos.y != b.agent_pos.y,
        a.agent_dir != b.agent_dir,
        a.carrying_key != b.carrying_key,
        a.door_state() != b.door_state(),
    ]
    .iter()
    .filter(|&&d| d)
    .count() as f64
}

/// Dense Q-table over every valid state of one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    width: usize,
    height: usize,
    values: Vec<[f64; 6]>,
    valid: Vec<bool>,
    sweeps: usize,
}

struct Indexer {
    width: usize,
    height: usize,
    inner_w: usize,
    cells: usize,
}

impl Indexer {
    fn new(width: usize, height: usize) -> Self {
        let inner_w = width - 2;
        Indexer {
            width,
            height,
            inner_w,
            cells: inner_w * (height - 2),
        }
    }

    fn size(&self) -> usize {
        self.cells * self.cells * 4 * (self.cells + 1) * 2
    }

    fn cell(&self, p: Pos) -> Option<usize> {
        let inside = p.x >= 1
            && p.y >= 1
            && (p.x as usize) < self.width - 1
            && (p.y as usize) < self.height - 1;
        inside.then(|| (p.y as usize - 1) * self.inner_w + (p.x as usize - 1))
    }

    fn pos(&self, cell: usize) -> Pos {
        Pos::new((cell % self.inner_w) as i32 + 1, (cell / self.inner_w) as i32 + 1)
    }

    fn index(&self, k: &StateKey) -> Option<usize> {
        // the dynamics never produce an unlocked-but-closed door
        if k.door_locked == k.door_open || k.carrying_key == k.key_pos.is_some() {
            return None;
        }
        let door = self.cell(k.door_pos)?;
        let agent = self.cell(k.agent_pos)?;
        let key_slot = match k.key_pos {
            None => 0,
            Some(p) => self.cell(p)? + 1,
        };
        let idx = (((door * self.cells + agent) * 4 + k.agent_dir.index()) * (self.cells + 1)
            + key_slot)
            * 2
            + k.door_open as usize;
        Some(idx)
    }

    fn key(&self, idx: usize) -> Option<StateKey> {
        let open = idx % 2 == 1;
        let rest = idx / 2;
        let key_slot = rest % (self.cells + 1);
        let rest = rest / (self.cells + 1);
        let dir = Direction::from_index(rest % 4);
        let rest = rest / 4;
        let agent = rest % self.cells;
        let door = rest / self.cells;
        let key_pos = (key_slot > 0).then(|| self.pos(key_slot - 1));
        let k = StateKey {
            agent_pos: self.pos(agent),
            agent_dir: dir,
            carrying_key: key_pos.is_none(),
            door_locked: !open,
            door_open: open,
            key_pos,
            door_pos: self.pos(door),
        };
        let distinct = agent != door && key_pos.is_none_or(|p| p != k.agent_pos && p != k.door_pos);
        distinct.then_some(k)
    }
}

impl QTable {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of Jacobi sweeps value iteration ran.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn n_states(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn row(&self, key: &StateKey) -> Option<&[f64; 6]> {
        let idx = Indexer::new(self.width, self.height).index(key)?;
        self.valid[idx].then(|| &self.values[idx])
    }

    /// Greedy action, ties to the lowest action code.
    pub fn greedy(&self, key: &StateKey) -> Option<Action> {
        let row = self.row(key)?;
        let mut best = 0;
        for a in 1..6 {
            if row[a] > row[best] {
                best = a;
            }
        }
        Action::from_index(best)
    }

    pub fn keys(&self) -> impl Iterator<Item = StateKey> + '_ {
        let ix = Indexer::new(self.width, self.height);
        (0..self.values.len())
            .filter(|&i| self.valid[i])
            .filter_map(move |i| ix.key(i))
    }

    /// A table of the right shape with every row set by `f`. Handy for tests
    /// that need hand-set action values.
    pub fn from_fn(config: &EnvConfig, f: impl Fn(&StateKey) -> [f64; 6]) -> Result<QTable> {
        check_size(config)?;
        let ix = Indexer::new(config.width, config.height);
        let mut values = vec![[0.0; 6]; ix.size()];
        let mut valid = vec![false; ix.size()];
        for (i, slot) in values.iter_mut().enumerate() {
            if let Some(k) = ix.key(i) {
                *slot = f(&k);
                valid[i] = true;
            }
        }
        Ok(QTable {
            width: config.width,
            height: config.height,
            values,
            valid,
            sweeps: 0,
        })
    }
}

fn check_size(config: &EnvConfig) -> Result<()> {
    config.validate()?;
    if config.width > MAX_GRID_SIDE || config.height > MAX_GRID_SIDE {
        return Err(HighlightError::StateSpaceTooLarge {
            width: config.width,
            height: config.height,
        });
    }
    Ok(())
}

/// Deterministic successor table: `(next index, reward, next is terminal)`.
struct Model {
    next: Vec<[(usize, f64, bool); 6]>,
    valid: Vec<bool>,
    terminal: Vec<bool>,
}

fn build_model(config: &EnvConfig) -> Result<Model> {
    check_size(config)?;
    let ix = Indexer::new(config.width, config.height);
    let n = ix.size();
    let mut next = vec![[(0, 0.0, true); 6]; n];
    let mut valid = vec![false; n];
    let mut terminal = vec![false; n];
    for i in 0..n {
        let Some(key) = ix.key(i) else { continue };
        valid[i] = true;
        terminal[i] = key.door_open;
        if key.door_open {
            continue;
        }
        for a in Action::ALL {
            let mut s = key.to_state(config.width, config.height);
            let t = s.apply(a);
            let j = ix
                .index(&StateKey::of(&s))
                .expect("transitions stay inside the state space");
            let reward = if t.opened_door { OPEN_REWARD } else { 0.0 };
            next[i][a.index()] = (j, reward, s.door_open);
        }
    }
    Ok(Model {
        next,
        valid,
        terminal,
    })
}

fn backup(model: &Model, values: &[[f64; 6]], gamma: f64, i: usize, a: usize) -> f64 {
    let (j, r, done) = model.next[i][a];
    if done {
        r
    } else {
        r + gamma * values[j].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Jacobi value iteration until the Bellman residual is at most `epsilon`.
pub fn value_iteration(config: &EnvConfig, gamma: f64, epsilon: f64) -> Result<QTable> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(HighlightError::InvalidGamma(gamma));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(HighlightError::InvalidEpsilon(epsilon));
    }
    let model = build_model(config)?;
    let n = model.valid.len();
    let mut values = vec![[0.0; 6]; n];
    let mut sweeps = 0;
    loop {
        let mut updated = values.clone();
        let mut delta: f64 = 0.0;
        for i in 0..n {
            if !model.valid[i] || model.terminal[i] {
                continue;
            }
            for a in 0..6 {
                let v = backup(&model, &values, gamma, i, a);
                delta = delta.max((v - values[i][a]).abs());
                updated[i][a] = v;
            }
        }
        values = updated;
        sweeps += 1;
        // ||Q' - TQ'|| <= gamma * ||Q' - Q||
        if gamma * delta <= epsilon {
            break;
        }
    }
    Ok(QTable {
        width: config.width,
        height: config.height,
        values,
        valid: model.valid,
        sweeps,
    })
}

/// `max |Q(s, a) - (TQ)(s, a)|` over every valid state-action pair.
pub fn bellman_residual(q: &QTable, config: &EnvConfig, gamma: f64) -> Result<f64> {
    let model = build_model(config)?;
    let mut worst: f64 = 0.0;
    for i in 0..model.valid.len() {
        if !model.valid[i] {
            continue;
        }
        for a in 0..6 {
            let target = if model.terminal[i] {
                0.0
            } else {
                backup(&model, &q.values, gamma, i, a)
            };
            worst = worst.max((q.values[i][a] - target).abs());
        }
    }
    Ok(worst)
}

pub fn importance(q_row: &[f64]) -> f64 {
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q_row.iter().copied().fold(f64::INFINITY, f64::min);
    if q_row.is_empty() {
        0.0
    } else {
        max - min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighlightParams {
    pub n_traces: usize,
    /// States kept on each side of the important state.
    pub context: usize,
    pub budget: usize,
    pub div: bool,
    pub base_seed: u64,
}

impl Default for HighlightParams {
    fn default() -> Self {
        HighlightParams {
            n_traces: 300,
            context: 5,
            budget: 20,
            div: false,
            base_seed: 0,
        }
    }
}

impl HighlightParams {
    fn validate(&self) -> Result<()> {
        if self.n_traces == 0 {
            return Err(HighlightError::InvalidParams("n_traces must be >= 1".into()));
        }
        if self.budget == 0 {
            return Err(HighlightError::InvalidParams("budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// One greedy rollout: the state each action was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub seed: u64,
    pub steps: Vec<(GridState, Action)>,
}

pub fn greedy_trace(q: &QTable, config: &EnvConfig, seed: u64) -> Result<GreedyTrace> {
    let mut env = Env::reset(config, seed)?;
    let mut steps = Vec::new();
    while !env.is_done() {
        let state = env.state().clone();
        let action = q
            .greedy(&StateKey::of(&state))
            .ok_or(HighlightError::UnknownState)?;
        env.step(action)?;
        steps.push((state, action));
    }
    Ok(GreedyTrace { seed, steps })
}

/// Traces use seeds `base_seed .. base_seed + n_traces`.
pub fn generate_traces(q: &QTable, config: &EnvConfig, params: &HighlightParams) -> Result<Vec<GreedyTrace>> {
    (0..params.n_traces as u64)
        .map(|i| greedy_trace(q, config, params.base_seed.wrapping_add(i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightTrajectory {
    pub trace_index: usize,
    pub center_step: usize,
    pub center_state: StateKey,
    /// Index of the window's first step within its trace.
    pub window_start: usize,
    pub window: Vec<(GridState, Action)>,
    pub importance: f64,
}

impl HighlightTrajectory {
    fn covers(&self, trace_index: usize, step: usize) -> bool {
        trace_index == self.trace_index
            && step >= self.window_start
            && step < self.window_start + self.window.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSummary {
    /// Ordered by (trace, step).
    pub trajectories: Vec<HighlightTrajectory>,
    pub parameters: HighlightParams,
}

/// What the online selector did with one candidate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Added,
    /// Replaced the entry in this slot.
    Replaced(usize),
    Rejected,
    /// The state lies inside a window already kept from the same trace.
    Overlap,
}

pub type Similarity<'a> = &'a (dyn Fn(&StateKey, &StateKey) -> f64 + Sync);

/// Online HIGHLIGHTS selector. With a similarity function it runs the DIV
/// replacement rule, otherwise the minimum-importance rule. Ties between
/// replaceable entries go to the oldest one.
pub struct Selector<'a> {
    budget: usize,
    similarity: Option<Similarity<'a>>,
    entries: Vec<(u64, HighlightTrajectory)>,
    inserted: u64,
}

impl<'a> Selector<'a> {
    pub fn new(budget: usize, similarity: Option<Similarity<'a>>) -> Self {
        Selector {
            budget,
            similarity,
            entries: Vec::with_capacity(budget),
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.budget
    }

    pub fn min_importance(&self) -> Option<f64> {
        self.entries
            .iter()
            .map(|(_, t)| t.importance)
            .min_by(f64::total_cmp)
    }

    pub fn entries(&self) -> impl Iterator<Item = &HighlightTrajectory> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// Whether a candidate centered at `step` of `trace_index` would be skipped.
    pub fn overlaps(&self, trace_index: usize, step: usize) -> bool {
        self.entries.iter().any(|(_, t)| t.covers(trace_index, step))
    }

    fn victim(&self, candidate: &HighlightTrajectory) -> usize {
        // entries are compared by (score, insertion order); the smallest wins
        let score = |t: &HighlightTrajectory| match self.similarity {
            Some(sim) => sim(&candidate.center_state, &t.center_state),
            None => t.importance,
        };
        let mut best = 0;
        for i in 1..self.entries.len() {
            let (seq_i, ti) = &self.entries[i];
            let (seq_b, tb) = &self.entries[best];
            match score(ti).total_cmp(&score(tb)) {
                std::cmp::Ordering::Less => best = i,
                std::cmp::Ordering::Equal if seq_i < seq_b => best = i,
                _ => {}
            }
        }
        best
    }

    pub fn offer(&mut self, candidate: HighlightTrajectory) -> Decision {
        let decision = if self.overlaps(candidate.trace_index, candidate.center_step) {
            Decision::Overlap
        } else if !self.is_full() {
            self.inserted += 1;
            self.entries.push((self.inserted, candidate));
            Decision::Added
        } else {
            let slot = self.victim(&candidate);
            if candidate.importance > self.entries[slot].1.importance {
                self.inserted += 1;
                self.entries[slot] = (self.inserted, candidate);
                Decision::Replaced(slot)
            } else {
                Decision::Rejected
            }
        };
        assert!(self.entries.len() <= self.budget, "summary exceeded its budget");
        decision
    }

    pub fn finish(self, parameters: HighlightParams) -> HighlightSummary {
        let mut trajectories: Vec<HighlightTrajectory> =
            self.entries.into_iter().map(|(_, t)| t).collect();
        trajectories.sort_by_key(|t| (t.trace_index, t.center_step));
        HighlightSummary {
            trajectories,
            parameters,
        }
    }
}

/// The candidate window centered on `step`, clipped to the trace.
pub fn candidate(
    q: &QTable,
    trace: &GreedyTrace,
    trace_index: usize,
    step: usize,
    context: usize,
) -> Result<HighlightTrajectory> {
    let start = step.saturating_sub(context);
    let end = (step + context + 1).min(trace.steps.len());
    let center_state = StateKey::of(&trace.steps[step].0);
    let row = q.row(&center_state).ok_or(HighlightError::UnknownState)?;
    Ok(HighlightTrajectory {
        trace_index,
        center_step: step,
        center_state,
        window_start: start,
        window: trace.steps[start..end].to_vec(),
        importance: importance(row),
    })
}

/// Streams every state of every trace, in order, through a selector.
pub fn select_from_traces(
    q: &QTable,
    traces: &[GreedyTrace],
    params: &HighlightParams,
    similarity: Option<Similarity<'_>>,
) -> Result<HighlightSummary> {
    params.validate()?;
    let mut selector = Selector::new(params.budget, similarity);
    for (ti, trace) in traces.iter().enumerate() {
        for step in 0..trace.steps.len() {
            selector.offer(candidate(q, trace, ti, step, params.context)?);
        }
    }
    Ok(selector.finish(*params))
}

/// Plain HIGHLIGHTS, or HIGHLIGHTS-DIV with the Hamming similarity when
/// `params.div` is set.
pub fn run_highlights(q: &QTable, config: &EnvConfig, params: &HighlightParams) -> Result<HighlightSummary> {
    if params.div {
        return run_highlights_div(q, config, params, &hamming_distance);
    }
    params.validate()?;
    let traces = generate_traces(q, config, params)?;
    select_from_traces(q, &traces, params, None)
}

pub fn run_highlights_div(
    q: &QTable,
    config: &EnvConfig,
    params: &HighlightParams,
    similarity: Similarity<'_>,
) -> Result<HighlightSummary> {
    params.validate()?;
    let params = HighlightParams { div: true, ..*params };
    let traces = generate_traces(q, config, &params)?;
    select_from_traces(q, &traces, &params, Some(similarity))
}

/// Plain-text rendering: one block per trajectory with captioned steps.
pub fn render_highlights(summary: &HighlightSummary, view_size: usize) -> String {
    let p = &summary.parameters;
    let mut out = format!(
        "HIGHLIGHTS{} summary: {} trajectories (traces={}, context={}, budget={})\n",
        if p.div { "-DIV" } else { "" },
        summary.trajectories.len(),
        p.n_traces,
        p.context,
        p.budget
    );
    for (i, t) in summary.trajectories.iter().enumerate() {
        out.push_str(&format!(
            "\nHighlight {} (trace {}, step {}, importance {:.6})\n",
            i + 1,
            t.trace_index + 1,
            t.center_step + 1,
            t.importance
        ));
        for (offset, (state, action)) in t.window.iter().enumerate() {
            let step = t.window_start + offset;
            let marker = if step == t.center_step { '*' } else { ' ' };
            out.push_str(&format!(
                "{marker} step {}: obs={{{}}}; action={{{}}}\n",
                step + 1,
                caption_observation(&state.observe(view_size)),
                caption_action(*action)
            ));
        }
    }
    out
}
