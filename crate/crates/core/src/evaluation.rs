//! Key-point scoring of summaries against expert annotations: recall,
//! precision, raw agreement and Gwet's AC1.
//!
//! Matching itself is a human judgment consumed from annotation files. The
//! only automated matcher here ([`suggest_matches`]) is advisory and never
//! feeds a score.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmBackend, LlmError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("annotation set has no experts")]
    NoExperts,
    #[error("empty expert key-point set (expert {expert})")]
    EmptyExpertSet { expert: String },
    #[error("empty LLM key-point set")]
    EmptyLlmSet,
    #[error("key point {id}: text must be non-empty")]
    EmptyPointText { id: String },
    #[error("duplicate key point id {id}")]
    DuplicatePoint { id: String },
    #[error("expert {expert}: unknown key point {id}")]
    UnknownPoint { expert: String, id: String },
    #[error("expert {expert}: duplicate label for {pair}")]
    DuplicateLabel { expert: String, pair: String },
    #[error("agreement needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("agreement needs at least 1 item")]
    NoItems,
    #[error("rater {rater} labelled {got} items, expected {expected}")]
    MismatchedItems {
        rater: usize,
        expected: usize,
        got: usize,
    },
    #[error("degenerate chance agreement (p_e = 1)")]
    DegenerateAgreement,
    #[error("annotation file contains no agents")]
    EmptyCorpus,
    #[error("invalid annotation JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub id: String,
    pub text: String,
}

/// Semantic-equivalence judgment between two key points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "LabelRepr", into = "LabelRepr")]
pub enum MatchLabel {
    NotMatched,
    Partial,
    Matched,
}

impl MatchLabel {
    pub const ALL: [MatchLabel; 3] = [MatchLabel::Matched, MatchLabel::Partial, MatchLabel::NotMatched];

    pub fn value(self) -> f64 {
        match self {
            MatchLabel::Matched => 1.0,
            MatchLabel::Partial => 0.5,
            MatchLabel::NotMatched => 0.0,
        }
    }

    pub fn from_value(v: f64) -> Option<MatchLabel> {
        MatchLabel::ALL.into_iter().find(|l| l.value() == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            MatchLabel::Matched => "matched",
            MatchLabel::Partial => "partial",
            MatchLabel::NotMatched => "not_matched",
        }
    }
}

/// Files may spell labels as names or as the numeric scores 1, 0.5, 0.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<LabelRepr> for MatchLabel {
    type Error = String;

    fn try_from(r: LabelRepr) -> std::result::Result<Self, String> {
        match r {
            LabelRepr::Name(n) => MatchLabel::ALL
                .into_iter()
                .find(|l| l.name() == n)
                .ok_or_else(|| format!("unknown match label {n:?}")),
            LabelRepr::Value(v) => {
                MatchLabel::from_value(v).ok_or_else(|| format!("match score must be 1, 0.5 or 0, got {v}"))
            }
        }
    }
}

impl From<MatchLabel> for LabelRepr {
    fn from(l: MatchLabel) -> LabelRepr {
        LabelRepr::Name(l.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMatch {
    pub expert_point: String,
    pub llm_point: String,
    pub label: MatchLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionLabel {
    pub llm_point: String,
    pub label: MatchLabel,
}

/// One expert's key points and judgments. Pairs absent from `matches` are
/// `NotMatched`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertAnnotation {
    pub id: String,
    pub points: Vec<KeyPoint>,
    #[serde(default)]
    pub matches: Vec<PointMatch>,
    #[serde(default)]
    pub precision_labels: Vec<PrecisionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub llm_points: Vec<KeyPoint>,
    pub experts: Vec<ExpertAnnotation>,
}

/// Annotation file contents: one agent, or a corpus of several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnnotationFile {
    Corpus { agents: Vec<AnnotationSet> },
    Single(AnnotationSet),
}

impl AnnotationFile {
    pub fn from_json(text: &str) -> Result<Vec<AnnotationSet>> {
        if text.trim().is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let sets = match serde_json::from_str::<AnnotationFile>(text) {
            Ok(AnnotationFile::Corpus { agents }) => agents,
            Ok(AnnotationFile::Single(s)) => vec![s],
            // the untagged error is uninformative; report the single-set one
            Err(_) => vec![serde_json::from_str::<AnnotationSet>(text)?],
        };
        if sets.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        for s in &sets {
            s.validate()?;
        }
        Ok(sets)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<AnnotationSet>> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_points(points: &[KeyPoint]) -> Result<HashSet<&str>> {
    let mut ids = HashSet::new();
    for p in points {
        if p.text.trim().is_empty() {
            return Err(EvalError::EmptyPointText { id: p.id.clone() });
        }
        if !ids.insert(p.id.as_str()) {
            return Err(EvalError::DuplicatePoint { id: p.id.clone() });
        }
    }
    Ok(ids)
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        if self.experts.is_empty() {
            return Err(EvalError::NoExperts);
        }
        if self.llm_points.is_empty() {
            return Err(EvalError::EmptyLlmSet);
        }
        let llm = check_points(&self.llm_points)?;
        let mut expert_ids = HashSet::new();
        for e in &self.experts {
            if !expert_ids.insert(e.id.as_str()) {
                return Err(EvalError::DuplicatePoint { id: e.id.clone() });
            }
            if e.points.is_empty() {
                return Err(EvalError::EmptyExpertSet { expert: e.id.clone() });
            }
            let own = check_points(&e.points)?;
            let unknown = |id: &str| EvalError::UnknownPoint {
                expert: e.id.clone(),
                id: id.to_string(),
            };
            let mut pairs = HashSet::new();
            for m in &e.matches {
                if !own.contains(m.expert_point.as_str()) {
                    return Err(unknown(&m.expert_point));
                }
                if !llm.contains(m.llm_point.as_str()) {
                    return Err(unknown(&m.llm_point));
                }
                if !pairs.insert((m.expert_point.as_str(), m.llm_point.as_str())) {
                    return Err(EvalError::DuplicateLabel {
                        expert: e.id.clone(),
                        pair: format!("({}, {})", m.expert_point, m.llm_point),
                    });
                }
            }
            let mut labelled = HashSet::new();
            for p in &e.precision_labels {
                if !llm.contains(p.llm_point.as_str()) {
                    return Err(unknown(&p.llm_point));
                }
                if !labelled.insert(p.llm_point.as_str()) {
                    return Err(EvalError::DuplicateLabel {
                        expert: e.id.clone(),
                        pair: p.llm_point.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Per-expert recall: mean over the expert's points of the best match
    /// any LLM point achieves.
    pub fn expert_recall(&self, expert: &ExpertAnnotation) -> Result<f64> {
        if expert.points.is_empty() {
            return Err(EvalError::EmptyExpertSet {
                expert: expert.id.clone(),
            });
        }
        let mut best: HashMap<&str, f64> = HashMap::new();
        for m in &expert.matches {
            let slot = best.entry(m.expert_point.as_str()).or_insert(0.0);
            *slot = slot.max(m.label.value());
        }
        let total: f64 = expert
            .points
            .iter()
            .map(|p| best.get(p.id.as_str()).copied().unwrap_or(0.0))
            .sum();
        Ok(total / expert.points.len() as f64)
    }

    /// Expert `j`'s precision label for every LLM point, in `llm_points`
    /// order. Explicit labels win; a missing label is `Matched` when the
    /// expert's own match matrix pairs the point fully with one of theirs,
    /// and `NotMatched` otherwise.
    pub fn effective_precision_labels(&self, expert: &ExpertAnnotation) -> Vec<MatchLabel> {
        let explicit: HashMap<&str, MatchLabel> = expert
            .precision_labels
            .iter()
            .map(|p| (p.llm_point.as_str(), p.label))
            .collect();
        let certified: HashSet<&str> = expert
            .matches
            .iter()
            .filter(|m| m.label == MatchLabel::Matched)
            .map(|m| m.llm_point.as_str())
            .collect();
        self.llm_points
            .iter()
            .map(|k| match explicit.get(k.id.as_str()) {
                Some(&l) => l,
                None if certified.contains(k.id.as_str()) => MatchLabel::Matched,
                None => MatchLabel::NotMatched,
            })
            .collect()
    }

    pub fn expert_precision(&self, expert: &ExpertAnnotation) -> Result<f64> {
        if self.llm_points.is_empty() {
            return Err(EvalError::EmptyLlmSet);
        }
        let labels = self.effective_precision_labels(expert);
        Ok(labels.iter().map(|l| l.value()).sum::<f64>() / labels.len() as f64)
    }

    /// Precision label sets, one per expert, over the shared LLM points.
    pub fn rater_labels(&self) -> Vec<Vec<MatchLabel>> {
        self.experts
            .iter()
            .map(|e| self.effective_precision_labels(e))
            .collect()
    }
}

/// Mean of the per-expert recalls.
pub fn recall(a: &AnnotationSet) -> Result<f64> {
    if a.experts.is_empty() {
        return Err(EvalError::NoExperts);
    }
    let mut total = 0.0;
    for e in &a.experts {
        total += a.expert_recall(e)?;
    }
    Ok(total / a.experts.len() as f64)
}

/// Each LLM point scores its best label across experts.
pub fn precision(a: &AnnotationSet) -> Result<f64> {
    if a.llm_points.is_empty() {
        return Err(EvalError::EmptyLlmSet);
    }
    if a.experts.is_empty() {
        return Err(EvalError::NoExperts);
    }
    let labels = a.rater_labels();
    let total: f64 = (0..a.llm_points.len())
        .map(|i| {
            labels
                .iter()
                .map(|l| l[i].value())
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / a.llm_points.len() as f64)
}

fn check_raters(label_sets: &[Vec<MatchLabel>]) -> Result<usize> {
    if label_sets.len() < 2 {
        return Err(EvalError::TooFewRaters(label_sets.len()));
    }
    let n = label_sets[0].len();
    for (rater, l) in label_sets.iter().enumerate() {
        if l.len() != n {
            return Err(EvalError::MismatchedItems {
                rater,
                expected: n,
                got: l.len(),
            });
        }
    }
    if n == 0 {
        return Err(EvalError::NoItems);
    }
    Ok(n)
}

/// Fraction of items on which every rater gave the same label.
pub fn raw_agreement(label_sets: &[Vec<MatchLabel>]) -> Result<f64> {
    let n = check_raters(label_sets)?;
    let agreed = (0..n)
        .filter(|&i| label_sets.iter().all(|l| l[i] == label_sets[0][i]))
        .count();
    Ok(agreed as f64 / n as f64)
}

/// Mean over items of the fraction of agreeing rater pairs.
pub fn pairwise_agreement(label_sets: &[Vec<MatchLabel>]) -> Result<f64> {
    let n = check_raters(label_sets)?;
    let r = label_sets.len();
    let pairs = (r * (r - 1) / 2) as f64;
    let mut total = 0.0;
    for i in 0..n {
        let mut counts = [0usize; 3];
        for l in label_sets {
            counts[category(l[i])] += 1;
        }
        let agreeing: usize = counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
        total += agreeing as f64 / pairs;
    }
    Ok(total / n as f64)
}

fn category(l: MatchLabel) -> usize {
    match l {
        MatchLabel::Matched => 0,
        MatchLabel::Partial => 1,
        MatchLabel::NotMatched => 2,
    }
}

/// Gwet's AC1 over the three match categories.
pub fn gwet_ac1(label_sets: &[Vec<MatchLabel>]) -> Result<f64> {
    let n = check_raters(label_sets)?;
    let p_a = pairwise_agreement(label_sets)?;
    let total = (n * label_sets.len()) as f64;
    let mut counts = [0usize; 3];
    for l in label_sets.iter().flatten() {
        counts[category(*l)] += 1;
    }
    let q = counts.len() as f64;
    let p_e = counts
        .iter()
        .map(|&c| {
            let pi = c as f64 / total;
            pi * (1.0 - pi)
        })
        .sum::<f64>()
        / (q - 1.0);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Err(EvalError::DegenerateAgreement);
    }
    Ok((p_a - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertScore {
    pub expert: String,
    pub recall: f64,
    /// Mean of this expert's own precision labels.
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// All raters identical.
    pub raw: f64,
    pub raw_pairwise: f64,
    pub ac1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub agent: Option<String>,
    pub recall: f64,
    pub precision: f64,
    pub per_expert: Vec<ExpertScore>,
    /// Absent with a single expert.
    pub agreement: Option<Agreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub agents: Vec<ScoreReport>,
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub mean_ac1: Option<f64>,
    pub mean_raw_agreement: Option<f64>,
}

pub fn score_report(a: &AnnotationSet) -> Result<ScoreReport> {
    a.validate()?;
    let per_expert = a
        .experts
        .iter()
        .map(|e| {
            Ok(ExpertScore {
                expert: e.id.clone(),
                recall: a.expert_recall(e)?,
                precision: a.expert_precision(e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let agreement = if a.experts.len() >= 2 {
        let labels = a.rater_labels();
        Some(Agreement {
            raw: raw_agreement(&labels)?,
            raw_pairwise: pairwise_agreement(&labels)?,
            ac1: gwet_ac1(&labels)?,
        })
    } else {
        None
    };
    Ok(ScoreReport {
        agent: a.agent.clone(),
        recall: recall(a)?,
        precision: precision(a)?,
        per_expert,
        agreement,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores every agent; overall figures are unweighted means over agents.
pub fn score_corpus(sets: &[AnnotationSet]) -> Result<CorpusReport> {
    if sets.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let agents = sets.iter().map(score_report).collect::<Result<Vec<_>>>()?;
    let with_agreement: Vec<Agreement> = agents.iter().filter_map(|r| r.agreement).collect();
    Ok(CorpusReport {
        mean_recall: mean(agents.iter().map(|r| r.recall)).expect("non-empty"),
        mean_precision: mean(agents.iter().map(|r| r.precision)).expect("non-empty"),
        mean_ac1: mean(with_agreement.iter().map(|a| a.ac1)),
        mean_raw_agreement: mean(with_agreement.iter().map(|a| a.raw)),
        agents,
    })
}

/// Human-readable table: one row per expert, agent means on the first row.
pub fn render_table(report: &CorpusReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<8} {:>7} {:>9}  Mean",
        "Agent", "Expert", "Recall", "Precision"
    );
    for (i, a) in report.agents.iter().enumerate() {
        let name = a.agent.clone().unwrap_or_else(|| format!("agent {}", i + 1));
        for (j, e) in a.per_expert.iter().enumerate() {
            let (label, mean) = if j == 0 {
                (name.as_str(), format!("R = {:.3}, P = {:.3}", a.recall, a.precision))
            } else {
                ("", String::new())
            };
            let _ = writeln!(
                out,
                "{:<28} {:<8} {:>7.3} {:>9.3}  {}",
                label, e.expert, e.recall, e.precision, mean
            );
        }
    }
    let _ = writeln!(
        out,
        "Overall: R = {:.3}, P = {:.3}",
        report.mean_recall, report.mean_precision
    );
    if let (Some(ac1), Some(raw)) = (report.mean_ac1, report.mean_raw_agreement) {
        let _ = writeln!(out, "Agreement: mean AC1 = {ac1:.3}, mean raw = {raw:.3}");
    }
    out
}

/// An embedding-similarity match proposal. Advisory only: never scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub expert: String,
    pub expert_point: String,
    pub llm_point: String,
    pub cosine: f64,
}

/// Proposes, for every expert point, the LLM point with the highest cosine
/// similarity, when it reaches `threshold`.
pub fn suggest_matches(
    a: &AnnotationSet,
    backend: &dyn LlmBackend,
    threshold: f64,
) -> Result<Vec<Suggestion>> {
    a.validate()?;
    let llm_texts: Vec<String> = a.llm_points.iter().map(|p| p.text.clone()).collect();
    let llm_vecs = backend.embed(&llm_texts)?;
    let mut out = Vec::new();
    for e in &a.experts {
        let texts: Vec<String> = e.points.iter().map(|p| p.text.clone()).collect();
        let vecs = backend.embed(&texts)?;
        for (p, v) in e.points.iter().zip(&vecs) {
            let best = llm_vecs
                .iter()
                .enumerate()
                .map(|(i, w)| (i, cosine(v.values(), w.values())))
                .fold(None, |acc: Option<(usize, f64)>, (i, c)| match acc {
                    Some((_, bc)) if bc >= c => acc,
                    _ => Some((i, c)),
                });
            if let Some((i, c)) = best.filter(|&(_, c)| c >= threshold) {
                out.push(Suggestion {
                    expert: e.id.clone(),
                    expert_point: p.id.clone(),
                    llm_point: a.llm_points[i].id.clone(),
                    cosine: c,
                });
            }
        }
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MatchLabel::*;

    fn kp(id: &str) -> KeyPoint {
        KeyPoint {
            id: id.into(),
            text: format!("claim {id}"),
        }
    }

    fn pm(e: &str, l: &str, label: MatchLabel) -> PointMatch {
        PointMatch {
            expert_point: e.into(),
            llm_point: l.into(),
            label,
        }
    }

    fn pl(l: &str, label: MatchLabel) -> PrecisionLabel {
        PrecisionLabel {
            llm_point: l.into(),
            label,
        }
    }

    fn one_expert(matches: Vec<PointMatch>, labels: Vec<PrecisionLabel>) -> AnnotationSet {
        AnnotationSet {
            agent: None,
            llm_points: vec![kp("l1"), kp("l2")],
            experts: vec![ExpertAnnotation {
                id: "E1".into(),
                points: vec![kp("e1"), kp("e2")],
                matches,
                precision_labels: labels,
            }],
        }
    }

    #[test]
    fn matched_and_partial_recall() {
        let a = one_expert(
            vec![pm("e1", "l1", Matched), pm("e2", "l2", Partial), pm("e2", "l1", NotMatched)],
            vec![],
        );
        assert_eq!(recall(&a).unwrap(), 0.75);
    }

    #[test]
    fn precision_prefill_and_authority() {
        let a = one_expert(vec![pm("e1", "l1", Matched)], vec![]);
        // l1 certified by the recall matrix, l2 missing -> not matched
        assert_eq!(precision(&a).unwrap(), 0.5);
        let b = one_expert(vec![pm("e1", "l1", Matched)], vec![pl("l1", Partial)]);
        assert_eq!(precision(&b).unwrap(), 0.25);
    }

    #[test]
    fn nothing_matched_scores_zero() {
        let a = one_expert(vec![], vec![pl("l1", NotMatched), pl("l2", NotMatched)]);
        assert_eq!(precision(&a).unwrap(), 0.0);
        assert_eq!(recall(&a).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_are_errors() {
        let mut a = one_expert(vec![], vec![]);
        a.experts[0].points.clear();
        assert_eq!(
            recall(&a).unwrap_err().to_string(),
            "empty expert key-point set (expert E1)"
        );
        let mut b = one_expert(vec![], vec![]);
        b.llm_points.clear();
        assert!(matches!(precision(&b), Err(EvalError::EmptyLlmSet)));
        assert!(matches!(AnnotationFile::from_json(""), Err(EvalError::EmptyCorpus)));
    }

    #[test]
    fn unknown_reference_rejected() {
        let a = one_expert(vec![pm("e1", "l9", Matched)], vec![]);
        assert!(matches!(a.validate(), Err(EvalError::UnknownPoint { .. })));
    }

    #[test]
    fn labels_parse_from_names_and_numbers() {
        let v: Vec<MatchLabel> = serde_json::from_str(r#"["matched", 0.5, 0, "not_matched", 1]"#).unwrap();
        assert_eq!(v, vec![Matched, Partial, NotMatched, NotMatched, Matched]);
        assert!(serde_json::from_str::<MatchLabel>("0.7").is_err());
        assert!(serde_json::from_str::<MatchLabel>(r#""maybe""#).is_err());
        assert_eq!(serde_json::to_string(&Partial).unwrap(), r#""partial""#);
    }

    #[test]
    fn agreement_counting() {
        let a = vec![Matched; 10];
        assert_eq!(raw_agreement(&[a.clone(), a.clone()]).unwrap(), 1.0);
        let mut b = a.clone();
        for l in b.iter_mut().take(3) {
            *l = Partial;
        }
        assert!((raw_agreement(&[a.clone(), b]).unwrap() - 0.7).abs() < 1e-15);
        let divergent = vec![Partial; 10];
        let sets = [a.clone(), a.clone(), divergent];
        assert_eq!(raw_agreement(&sets).unwrap(), 0.0);
        assert!((pairwise_agreement(&sets).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(raw_agreement(std::slice::from_ref(&a)), Err(EvalError::TooFewRaters(1))));
        assert!(matches!(
            raw_agreement(&[a, vec![Matched; 9]]),
            Err(EvalError::MismatchedItems { .. })
        ));
    }

    #[test]
    fn ac1_hand_example() {
        // 2 raters x 10 items cannot use three categories uniformly, so the
        // same proportions are built over 30 items: 9 disagreements
        let u1: Vec<_> = [Matched, Partial, NotMatched].iter().cycle().take(30).copied().collect();
        let mut u2 = u1.clone();
        // rotating labels within each triple keeps usage uniform
        for i in (0..9).step_by(3) {
            u2[i] = Partial;
            u2[i + 1] = NotMatched;
            u2[i + 2] = Matched;
        }
        let sets = [u1, u2];
        assert!((pairwise_agreement(&sets).unwrap() - 0.7).abs() < 1e-15);
        assert!((gwet_ac1(&sets).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn perfect_agreement_is_one() {
        let r = vec![Matched, Partial, NotMatched, Matched];
        assert_eq!(gwet_ac1(&[r.clone(), r.clone(), r]).unwrap(), 1.0);
    }

    #[test]
    fn single_expert_all_matched_report() {
        let a = one_expert(
            vec![pm("e1", "l1", Matched), pm("e2", "l2", Matched)],
            vec![],
        );
        let r = score_report(&a).unwrap();
        assert_eq!((r.recall, r.precision), (1.0, 1.0));
        assert!(r.agreement.is_none());
    }
}
