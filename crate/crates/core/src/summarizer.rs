//! Hierarchical, budget-bounded summarization of a textual experience buffer.
//!
//! When the rendered prompt fits the token budget, the backend is sampled `K`
//! times and the median representative is kept: candidates are embedded, the
//! distance of each embedding to the centroid is ranked (ascending, ties by
//! index, ranks from 1) and the candidate whose rank is closest to `K / 2`
//! wins (ties by index). When the prompt does not fit, the input is split on
//! unit boundaries (whole episodes, or whole intermediate summaries), every
//! part is summarized, and the list of part summaries is summarized again.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{EmbeddingVector, LlmBackend, LlmError, TokenEstimator};
use crate::teb::{episode_blocks, ExperienceTuple, TextualExperienceBuffer};

pub const EPISODES_HEADER: &str = "[Formatted Experience Dataset]";
pub const SUMMARIES_HEADER: &str = "[Intermediate Summaries]";

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("nothing to summarize: input is empty")]
    EmptyInput,
    #[error("number of candidates K must be at least 1")]
    ZeroCandidates,
    #[error("embedding dimensions differ between candidates")]
    DimensionMismatch,
    #[error("partition called on input that already fits the budget")]
    PartitionNotNeeded,
    #[error("episode exceeds budget: episode {episode_id} needs {tokens} tokens, budget is {budget}")]
    EpisodeExceedsBudget {
        episode_id: u64,
        tokens: usize,
        budget: usize,
    },
    #[error("intermediate summary {index} exceeds budget: needs {tokens} tokens, budget is {budget}")]
    SummaryExceedsBudget {
        index: usize,
        tokens: usize,
        budget: usize,
    },
    #[error("level {level}: partition of {units} summaries does not reduce the input")]
    NoReduction { level: usize, units: usize },
    #[error("maximum tree depth {0} exceeded")]
    MaxDepthExceeded(usize),
    #[error("backend failure at level {level}, part {part}: {source}")]
    Backend {
        level: usize,
        part: usize,
        #[source]
        source: LlmError,
    },
}

pub type Result<T> = std::result::Result<T, SummarizeError>;

/// The three fixed prompt sections; the formatted data goes between the
/// environment context and the output specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub general_instructions: String,
    pub environment_context: String,
    pub output_spec: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            general_instructions: include_str!("../assets/general_instructions.txt").to_string(),
            environment_context: include_str!("../assets/environment_context.txt").to_string(),
            output_spec: include_str!("../assets/output_spec.txt").to_string(),
        }
    }
}

impl PromptTemplate {
    /// File names read by [`PromptTemplate::from_dir`].
    pub const FILES: [&'static str; 3] = [
        "general_instructions.txt",
        "environment_context.txt",
        "output_spec.txt",
    ];

    /// Loads the three sections from a directory laid out like the bundled
    /// assets.
    pub fn from_dir(dir: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.as_ref().join(name));
        Ok(PromptTemplate {
            general_instructions: read(Self::FILES[0])?,
            environment_context: read(Self::FILES[1])?,
            output_spec: read(Self::FILES[2])?,
        })
    }

    /// `formatted` must end with a newline, as produced by [`format_input`].
    pub fn assemble(&self, formatted: &str) -> String {
        format!(
            "{}\n\n{}\n\n{}\n{}\n",
            self.general_instructions.trim_end(),
            self.environment_context.trim_end(),
            formatted,
            self.output_spec.trim_end()
        )
    }

    fn scaffold_chars(&self) -> usize {
        self.assemble("").chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarizerConfig {
    /// Token budget per prompt.
    pub kappa: usize,
    /// Candidates sampled per call.
    pub k: usize,
    /// Fraction of `kappa` held back to absorb estimator error.
    pub safety_margin: f64,
    pub max_depth: usize,
    pub chars_per_token: usize,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig {
            kappa: 100_000,
            k: 5,
            safety_margin: 0.1,
            max_depth: 10,
            chars_per_token: 4,
        }
    }
}

impl SummarizerConfig {
    /// Largest prompt, in estimated tokens, that will be sent.
    pub fn effective_budget(&self) -> usize {
        let margin = self.safety_margin.clamp(0.0, 1.0);
        (self.kappa as f64 * (1.0 - margin)).floor() as usize
    }

    pub fn estimator(&self) -> TokenEstimator {
        TokenEstimator::new(self.chars_per_token)
    }
}

/// What a summarization call consumes: whole episodes, or intermediate
/// summaries from the level below.
#[derive(Debug, Clone, PartialEq)]
pub enum SummaryInput {
    Episodes(Vec<Vec<ExperienceTuple>>),
    Summaries(Vec<String>),
}

impl SummaryInput {
    pub fn from_buffer(buffer: &TextualExperienceBuffer) -> Self {
        SummaryInput::Episodes(buffer.episodes().into_iter().map(<[_]>::to_vec).collect())
    }

    pub fn from_tuples(tuples: &[ExperienceTuple]) -> Self {
        SummaryInput::Episodes(episode_blocks(tuples).into_iter().map(<[_]>::to_vec).collect())
    }

    /// Number of indivisible units (episodes or summaries).
    pub fn len(&self) -> usize {
        match self {
            SummaryInput::Episodes(e) => e.len(),
            SummaryInput::Summaries(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn header(&self) -> &'static str {
        match self {
            SummaryInput::Episodes(_) => EPISODES_HEADER,
            SummaryInput::Summaries(_) => SUMMARIES_HEADER,
        }
    }

    /// Text of unit `i` when it is the `position`-th (1-based) unit of a part.
    fn render_unit(&self, i: usize, position: usize) -> String {
        match self {
            SummaryInput::Episodes(eps) => eps[i].iter().map(format_tuple).collect(),
            SummaryInput::Summaries(s) => format!("Summary {position}:\n{}\n", s[i].trim_end()),
        }
    }

    fn subset(&self, range: std::ops::Range<usize>) -> SummaryInput {
        match self {
            SummaryInput::Episodes(e) => SummaryInput::Episodes(e[range].to_vec()),
            SummaryInput::Summaries(s) => SummaryInput::Summaries(s[range].to_vec()),
        }
    }
}

pub fn format_tuple(t: &ExperienceTuple) -> String {
    format!(
        "episode {} step {}: obs={{{}}}; action={{{}}}; cumulative_reward={:.3}\n",
        t.episode_id, t.step_number, t.obs_caption, t.act_caption, t.cumulative_reward
    )
}

/// Header line followed by one line per tuple, or one numbered block per
/// intermediate summary.
pub fn format_input(input: &SummaryInput) -> Result<String> {
    if input.is_empty() || matches!(input, SummaryInput::Episodes(e) if e.iter().any(Vec::is_empty))
    {
        return Err(SummarizeError::EmptyInput);
    }
    let mut out = format!("{}\n", input.header());
    for i in 0..input.len() {
        out.push_str(&input.render_unit(i, i + 1));
    }
    Ok(out)
}

pub fn format_buffer(buffer: &TextualExperienceBuffer) -> String {
    format_input(&SummaryInput::from_buffer(buffer)).expect("validated buffers are non-empty")
}

fn fits(template: &PromptTemplate, input: &SummaryInput, config: &SummarizerConfig) -> Result<bool> {
    let prompt = template.assemble(&format_input(input)?);
    Ok(config.estimator().count(&prompt) <= config.effective_budget())
}

/// Greedy, order-preserving split on unit boundaries: units accumulate into
/// the current part until the next one would push the prompt over budget.
pub fn partition(
    input: &SummaryInput,
    template: &PromptTemplate,
    config: &SummarizerConfig,
) -> Result<Vec<SummaryInput>> {
    if fits(template, input, config)? {
        return Err(SummarizeError::PartitionNotNeeded);
    }
    let est = config.estimator();
    let budget = config.effective_budget();
    let base = template.scaffold_chars() + input.header().chars().count() + 1;
    let mut parts = Vec::new();
    let mut start = 0;
    let mut chars = base;
    for i in 0..input.len() {
        let position = i - start + 1;
        let unit = input.render_unit(i, position).chars().count();
        if position > 1 && est.count_chars(chars + unit) > budget {
            parts.push(input.subset(start..i));
            start = i;
            chars = base;
        }
        let unit = input.render_unit(i, i - start + 1).chars().count();
        if i == start && est.count_chars(base + unit) > budget {
            let tokens = est.count_chars(base + unit);
            return Err(match input {
                SummaryInput::Episodes(e) => SummarizeError::EpisodeExceedsBudget {
                    episode_id: e[i][0].episode_id,
                    tokens,
                    budget,
                },
                SummaryInput::Summaries(_) => SummarizeError::SummaryExceedsBudget {
                    index: i,
                    tokens,
                    budget,
                },
            });
        }
        chars += unit;
    }
    parts.push(input.subset(start..input.len()));
    Ok(parts)
}

/// Outcome of median-representative selection over `K` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub distances: Vec<f64>,
    /// 1-based rank of each candidate's distance, ascending; exact ties share
    /// a rank.
    pub ranks: Vec<usize>,
}

pub fn centroid(embeddings: &[EmbeddingVector]) -> Result<Vec<f64>> {
    let first = embeddings.first().ok_or(SummarizeError::ZeroCandidates)?;
    let dim = first.dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(SummarizeError::DimensionMismatch);
    }
    let k = embeddings.len() as f64;
    let mut c = vec![0.0; dim];
    for e in embeddings {
        for (acc, v) in c.iter_mut().zip(e.values()) {
            *acc += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= k);
    Ok(c)
}

pub fn median_selection(embeddings: &[EmbeddingVector]) -> Result<Selection> {
    let c = centroid(embeddings)?;
    let distances: Vec<f64> = embeddings
        .iter()
        .map(|e| {
            e.values()
                .iter()
                .zip(&c)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    // competition ranking: equal distances share the lowest rank, so the
    // index tie-break below decides between them
    let ranks: Vec<usize> = distances
        .iter()
        .map(|d| 1 + distances.iter().filter(|&o| o < d).count())
        .collect();
    let target = distances.len() as f64 / 2.0;
    let mut index = 0;
    for i in 1..ranks.len() {
        if (ranks[i] as f64 - target).abs() < (ranks[index] as f64 - target).abs() {
            index = i;
        }
    }
    Ok(Selection {
        index,
        distances,
        ranks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCandidate {
    pub text: String,
    pub embedding: EmbeddingVector,
    pub distance_to_centroid: f64,
    pub rank: usize,
}

/// Embeds `candidates` and picks the median representative.
pub fn select_median(
    candidates: &[String],
    backend: &dyn LlmBackend,
) -> std::result::Result<(usize, Vec<SummaryCandidate>), SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::Summarize(SummarizeError::ZeroCandidates));
    }
    let embeddings = backend.embed(candidates)?;
    if embeddings.len() != candidates.len() {
        return Err(SelectError::Llm(LlmError::Protocol(format!(
            "expected {} embeddings, got {}",
            candidates.len(),
            embeddings.len()
        ))));
    }
    let sel = median_selection(&embeddings)?;
    let out = candidates
        .iter()
        .zip(embeddings)
        .enumerate()
        .map(|(i, (text, embedding))| SummaryCandidate {
            text: text.clone(),
            embedding,
            distance_to_centroid: sel.distances[i],
            rank: sel.ranks[i],
        })
        .collect();
    Ok((sel.index, out))
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
}

/// One backend call in the summarization tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub level: usize,
    pub part: usize,
    pub input_units: usize,
    pub prompt_tokens: usize,
    pub selected_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResult {
    pub final_text: String,
    pub selected_index: usize,
    /// Candidates of the root call.
    pub candidates: Vec<SummaryCandidate>,
    /// Number of partition levels; 0 means a single call.
    pub tree_depth: usize,
    pub partitions_per_level: Vec<usize>,
    pub nodes: Vec<NodeRecord>,
    pub kappa: usize,
    pub effective_budget: usize,
    pub k: usize,
}

struct NodeOutcome {
    selected: String,
    selected_index: usize,
    candidates: Vec<SummaryCandidate>,
    record: NodeRecord,
}

fn run_node(
    input: &SummaryInput,
    level: usize,
    part: usize,
    backend: &dyn LlmBackend,
    template: &PromptTemplate,
    config: &SummarizerConfig,
) -> Result<NodeOutcome> {
    let prompt = template.assemble(&format_input(input)?);
    let prompt_tokens = config.estimator().count(&prompt);
    assert!(
        prompt_tokens <= config.effective_budget(),
        "prompt of {prompt_tokens} tokens exceeds budget {}",
        config.effective_budget()
    );
    let wrap = |source: LlmError| SummarizeError::Backend {
        level,
        part,
        source,
    };
    let texts = backend.sample(&prompt, config.k).map_err(wrap)?;
    let (selected_index, candidates) = select_median(&texts, backend).map_err(|e| match e {
        SelectError::Llm(source) => wrap(source),
        SelectError::Summarize(e) => e,
    })?;
    Ok(NodeOutcome {
        selected: texts[selected_index].clone(),
        selected_index,
        candidates,
        record: NodeRecord {
            level,
            part,
            input_units: input.len(),
            prompt_tokens,
            selected_index,
        },
    })
}

pub fn summarize(
    buffer: &TextualExperienceBuffer,
    backend: &dyn LlmBackend,
    template: &PromptTemplate,
    config: &SummarizerConfig,
) -> Result<SummaryResult> {
    summarize_input(SummaryInput::from_buffer(buffer), backend, template, config)
}

pub fn summarize_input(
    mut input: SummaryInput,
    backend: &dyn LlmBackend,
    template: &PromptTemplate,
    config: &SummarizerConfig,
) -> Result<SummaryResult> {
    if config.k == 0 {
        return Err(SummarizeError::ZeroCandidates);
    }
    format_input(&input)?;
    let mut level = 0;
    let mut partitions_per_level = Vec::new();
    let mut nodes = Vec::new();
    loop {
        if fits(template, &input, config)? {
            let root = run_node(&input, level, 0, backend, template, config)?;
            nodes.push(root.record);
            return Ok(SummaryResult {
                final_text: root.selected,
                selected_index: root.selected_index,
                candidates: root.candidates,
                tree_depth: level,
                partitions_per_level,
                nodes,
                kappa: config.kappa,
                effective_budget: config.effective_budget(),
                k: config.k,
            });
        }
        if level >= config.max_depth {
            return Err(SummarizeError::MaxDepthExceeded(config.max_depth));
        }
        let parts = partition(&input, template, config)?;
        if matches!(input, SummaryInput::Summaries(_)) && parts.len() >= input.len() {
            return Err(SummarizeError::NoReduction {
                level,
                units: input.len(),
            });
        }
        partitions_per_level.push(parts.len());
        let outcomes: Vec<Result<NodeOutcome>> = parts
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_node(p, level, i, backend, template, config))
            .collect();
        let mut summaries = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let outcome = outcome?;
            nodes.push(outcome.record);
            summaries.push(outcome.selected);
        }
        input = SummaryInput::Summaries(summaries);
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::Caption;
    use crate::llm::MockBackend;

    fn emb(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn episode(id: u64, steps: u32) -> Vec<ExperienceTuple> {
        (1..=steps)
            .map(|s| ExperienceTuple {
                episode_id: id,
                step_number: s,
                obs_caption: Caption::new("a key 2 tiles ahead; facing an empty tile; empty-handed")
                    .unwrap(),
                act_caption: Caption::new("move forward").unwrap(),
                cumulative_reward: 0.0,
            })
            .collect()
    }

    #[test]
    fn median_of_three_hand_computed() {
        // c = 11/3, d = {11/3, 19/3, 8/3}, ranks {2, 3, 1}, |rank - 1.5| = {.5, 1.5, .5}
        let sel = median_selection(&[emb(&[0.0]), emb(&[10.0]), emb(&[1.0])]).unwrap();
        assert_eq!(sel.ranks, vec![2, 3, 1]);
        assert!((sel.distances[0] - 11.0 / 3.0).abs() < 1e-12);
        assert!((sel.distances[1] - 19.0 / 3.0).abs() < 1e-12);
        assert!((sel.distances[2] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(sel.index, 0);
    }

    #[test]
    fn single_and_identical_candidates() {
        assert_eq!(median_selection(&[emb(&[1.0, 2.0])]).unwrap().index, 0);
        let same = vec![emb(&[0.5, 0.5]); 4];
        let sel = median_selection(&same).unwrap();
        assert_eq!(sel.index, 0);
        assert!(sel.distances.iter().all(|&d| d == 0.0));
        assert_eq!(sel.ranks, vec![1, 1, 1, 1]);
    }

    #[test]
    fn zero_candidates_and_bad_dims() {
        assert!(matches!(median_selection(&[]), Err(SummarizeError::ZeroCandidates)));
        assert!(matches!(
            median_selection(&[emb(&[1.0]), emb(&[1.0, 2.0])]),
            Err(SummarizeError::DimensionMismatch)
        ));
    }

    #[test]
    fn format_one_tuple() {
        let input = SummaryInput::Episodes(vec![episode(1, 1)]);
        let text = format_input(&input).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], EPISODES_HEADER);
        assert_eq!(
            lines[1],
            "episode 1 step 1: obs={a key 2 tiles ahead; facing an empty tile; empty-handed}; action={move forward}; cumulative_reward=0.000"
        );
        assert!(format_input(&SummaryInput::Summaries(vec![])).is_err());
    }

    #[test]
    fn prompt_sections_in_order() {
        let t = PromptTemplate::default();
        let p = t.assemble("[Formatted Experience Dataset]\nx\n");
        let pos = |s: &str| p.find(s).unwrap();
        assert!(pos("[General Instructions]") < pos("[Environment Description]"));
        assert!(pos("[Environment Description]") < pos("[Formatted Experience Dataset]"));
        assert!(pos("[Formatted Experience Dataset]") < pos("[Output Instructions]"));
    }

    fn tight_config(template: &PromptTemplate, unit_chars: usize, units: usize) -> SummarizerConfig {
        let base = template.scaffold_chars() + EPISODES_HEADER.len() + 1;
        SummarizerConfig {
            kappa: (base + units * unit_chars).div_ceil(4),
            safety_margin: 0.0,
            k: 3,
            ..SummarizerConfig::default()
        }
    }

    #[test]
    fn ten_equal_episodes_four_per_part() {
        let template = PromptTemplate::default();
        // ids 11..=20 render with equal widths
        let input = SummaryInput::Episodes((11..=20).map(|id| episode(id, 3)).collect());
        let unit = input.render_unit(0, 1).len();
        let config = tight_config(&template, unit, 4);
        let parts = partition(&input, &template, &config).unwrap();
        assert_eq!(parts.iter().map(SummaryInput::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let rejoined: Vec<Vec<ExperienceTuple>> = parts
            .into_iter()
            .flat_map(|p| match p {
                SummaryInput::Episodes(e) => e,
                SummaryInput::Summaries(_) => unreachable!(),
            })
            .collect();
        assert_eq!(SummaryInput::Episodes(rejoined), input);
    }

    #[test]
    fn partition_requires_overflow() {
        let template = PromptTemplate::default();
        let input = SummaryInput::Episodes(vec![episode(1, 2)]);
        let err = partition(&input, &template, &SummarizerConfig::default()).unwrap_err();
        assert!(matches!(err, SummarizeError::PartitionNotNeeded));
    }

    #[test]
    fn oversized_episode_is_an_error() {
        let template = PromptTemplate::default();
        let input = SummaryInput::Episodes(vec![episode(1, 2), episode(2, 40)]);
        let unit = input.render_unit(0, 1).len();
        let config = tight_config(&template, unit, 1);
        let err = partition(&input, &template, &config).unwrap_err();
        assert!(err.to_string().contains("episode exceeds budget"), "{err}");
        assert!(matches!(err, SummarizeError::EpisodeExceedsBudget { episode_id: 2, .. }));
    }

    #[test]
    fn single_call_when_it_fits() {
        let tuples: Vec<_> = episode(1, 5);
        let buffer = TextualExperienceBuffer::from_tuples(tuples).unwrap();
        let backend = MockBackend::default();
        let r = summarize(&buffer, &backend, &PromptTemplate::default(), &SummarizerConfig::default())
            .unwrap();
        assert_eq!(r.tree_depth, 0);
        assert!(r.partitions_per_level.is_empty());
        assert_eq!(r.candidates.len(), 5);
        assert_eq!(r.final_text, r.candidates[r.selected_index].text);
        assert_eq!(r.nodes.len(), 1);
    }
}
