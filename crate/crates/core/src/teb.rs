//! The textual experience buffer: captioned `(observation, action,
//! cumulative reward, episode)` tuples in collection order, persisted as
//! line-delimited JSON.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::captioner::{caption_action, caption_observation, Caption};
use crate::gridworld::{run_episode, EnvConfig, GridError};
use crate::policies::PolicyRef;

#[derive(Debug, Error)]
pub enum TebError {
    #[error("n_episodes must be at least 1")]
    NoEpisodes,
    #[error("empty buffer")]
    Empty,
    #[error("line {line}: malformed tuple: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {violation}")]
    Invariant { line: usize, violation: String },
    #[error(transparent)]
    Env(#[from] GridError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, TebError>;

/// One captioned step. Field order is the persisted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceTuple {
    pub episode_id: u64,
    pub step_number: u32,
    pub obs_caption: Caption,
    pub act_caption: Caption,
    /// Reward accumulated before this step's action was taken.
    pub cumulative_reward: f64,
}

/// Per-episode outcome reported by the simulator during collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode_id: u64,
    pub seed: u64,
    pub length: usize,
    pub total_reward: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextualExperienceBuffer {
    tuples: Vec<ExperienceTuple>,
    n_episodes: usize,
}

impl TextualExperienceBuffer {
    /// Validates every buffer invariant.
    pub fn from_tuples(tuples: Vec<ExperienceTuple>) -> Result<Self> {
        let n_episodes = validate(&tuples)?;
        Ok(TextualExperienceBuffer { tuples, n_episodes })
    }

    pub fn tuples(&self) -> &[ExperienceTuple] {
        &self.tuples
    }

    pub fn n_episodes(&self) -> usize {
        self.n_episodes
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Contiguous per-episode slices, in buffer order.
    pub fn episodes(&self) -> Vec<&[ExperienceTuple]> {
        episode_blocks(&self.tuples)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tuples {
            out.push_str(&serde_json::to_string(t).expect("tuples always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl io::Read) -> Result<Self> {
        let mut tuples = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: ExperienceTuple =
                serde_json::from_str(&line).map_err(|e| TebError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            tuples.push(t);
            lines.push(i + 1);
        }
        let n_episodes = validate(&tuples).map_err(|e| match e {
            // map tuple indices back onto file line numbers
            TebError::Invariant { line, violation } => TebError::Invariant {
                line: lines.get(line - 1).copied().unwrap_or(line),
                violation,
            },
            other => other,
        })?;
        Ok(TextualExperienceBuffer { tuples, n_episodes })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(fs::File::open(path)?)
    }
}

pub(crate) fn episode_blocks(tuples: &[ExperienceTuple]) -> Vec<&[ExperienceTuple]> {
    tuples
        .chunk_by(|a, b| a.episode_id == b.episode_id)
        .collect()
}

/// Checks buffer invariants and returns the episode count. Errors carry the
/// 1-based index of the offending tuple.
fn validate(tuples: &[ExperienceTuple]) -> Result<usize> {
    if tuples.is_empty() {
        return Err(TebError::Empty);
    }
    let violation = |idx: usize, msg: &str| TebError::Invariant {
        line: idx + 1,
        violation: msg.to_string(),
    };
    let mut seen = HashSet::new();
    let mut prev: Option<&ExperienceTuple> = None;
    for (i, t) in tuples.iter().enumerate() {
        if t.episode_id == 0 {
            return Err(violation(i, "episode_id must be positive"));
        }
        if !t.cumulative_reward.is_finite() || t.cumulative_reward < 0.0 {
            return Err(violation(i, "cumulative_reward must be finite and non-negative"));
        }
        let continues = prev.is_some_and(|p| p.episode_id == t.episode_id);
        if continues {
            let p = prev.expect("checked above");
            if t.step_number != p.step_number + 1 {
                return Err(violation(i, "step_number not contiguous"));
            }
            if t.cumulative_reward < p.cumulative_reward {
                return Err(violation(i, "cumulative_reward not monotone"));
            }
        } else {
            if !seen.insert(t.episode_id) {
                return Err(violation(i, "episode block not contiguous"));
            }
            if t.step_number != 1 {
                return Err(violation(i, "step_number must start at 1"));
            }
        }
        prev = Some(t);
    }
    Ok(seen.len())
}

/// Runs `n_episodes` episodes (episode `i` uses seed `base_seed + i - 1`) and
/// captions every step. The reward recorded with a step is the episode
/// reward accumulated before that step's action.
pub fn collect(
    policy: &PolicyRef,
    config: &EnvConfig,
    n_episodes: usize,
    base_seed: u64,
) -> Result<TextualExperienceBuffer> {
    collect_with_stats(policy, config, n_episodes, base_seed).map(|(b, _)| b)
}

pub fn collect_with_stats(
    policy: &PolicyRef,
    config: &EnvConfig,
    n_episodes: usize,
    base_seed: u64,
) -> Result<(TextualExperienceBuffer, Vec<EpisodeStats>)> {
    if n_episodes == 0 {
        return Err(TebError::NoEpisodes);
    }
    let episodes: Vec<(Vec<ExperienceTuple>, EpisodeStats)> = (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| {
            let episode_id = i + 1;
            let seed = base_seed.wrapping_add(i);
            let trace = run_episode(policy, config, seed)?;
            let mut ep_reward = 0.0;
            let mut tuples = Vec::with_capacity(trace.len());
            for (t, step) in trace.steps.iter().enumerate() {
                tuples.push(ExperienceTuple {
                    episode_id,
                    step_number: t as u32 + 1,
                    obs_caption: caption_observation(&step.observation),
                    act_caption: caption_action(step.action),
                    cumulative_reward: ep_reward,
                });
                ep_reward += step.reward;
            }
            let stats = EpisodeStats {
                episode_id,
                seed,
                length: trace.len(),
                total_reward: ep_reward,
                success: trace.success(),
            };
            Ok((tuples, stats))
        })
        .collect::<std::result::Result<_, GridError>>()?;
    let mut tuples = Vec::new();
    let mut stats = Vec::with_capacity(episodes.len());
    for (t, s) in episodes {
        tuples.extend(t);
        stats.push(s);
    }
    Ok((TextualExperienceBuffer::from_tuples(tuples)?, stats))
}
