use polsum_core::gridworld::{Action, Direction, EnvConfig, GridState, Pos};
use polsum_core::highlights::{
    candidate, generate_traces, hamming_distance, importance, render_highlights, run_highlights,
    select_from_traces, value_iteration, Decision, HighlightParams, HighlightSummary, HighlightTrajectory, QTable,
    Selector, StateKey,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn q_table() -> &'static QTable {
    static Q: OnceLock<QTable> = OnceLock::new();
    Q.get_or_init(|| value_iteration(&EnvConfig::default(), 0.99, 1e-6).unwrap())
}

fn key(x: i32, y: i32, dir: Direction, carrying: bool) -> StateKey {
    StateKey {
        agent_pos: Pos::new(x, y),
        agent_dir: dir,
        carrying_key: carrying,
        door_locked: true,
        door_open: false,
        key_pos: if carrying { None } else { Some(Pos::new(3, 3)) },
        door_pos: Pos::new(5, 2),
    }
}

/// A single-step highlight from its own trace, so windows never overlap.
fn single(trace_index: usize, importance: f64, center_state: StateKey) -> HighlightTrajectory {
    let state = GridState::sample(&EnvConfig::default(), 0).unwrap();
    HighlightTrajectory {
        trace_index,
        center_step: 0,
        center_state,
        window_start: 0,
        window: vec![(state, Action::MoveForward)],
        importance,
    }
}

fn plain(importances: &[f64], budget: usize) -> Vec<f64> {
    let mut s = Selector::new(budget, None);
    for (i, &imp) in importances.iter().enumerate() {
        s.offer(single(i, imp, key(1, 1, Direction::North, false)));
    }
    s.entries().map(|t| t.importance).collect()
}

#[test]
fn div_keeps_the_distinct_cluster() {
    let offers = [
        ("A1", 0.9, key(1, 1, Direction::North, false)),
        ("A2", 0.8, key(2, 1, Direction::North, false)),
        ("A3", 0.6, key(4, 4, Direction::South, false)),
        ("A4", 0.65, key(1, 2, Direction::North, false)),
        ("B1", 0.62, key(4, 4, Direction::South, true)),
    ];
    let names = |summary: HighlightSummary| -> Vec<&str> {
        summary
            .trajectories
            .iter()
            .map(|t| offers[t.trace_index].0)
            .collect()
    };

    let mut p = Selector::new(3, None);
    let mut d = Selector::new(3, Some(&hamming_distance));
    for (i, (_, imp, k)) in offers.iter().enumerate() {
        p.offer(single(i, *imp, *k));
        d.offer(single(i, *imp, *k));
    }
    let params = HighlightParams::default();
    assert_eq!(names(p.finish(params)), ["A1", "A2", "A4"]);
    assert_eq!(names(d.finish(params)), ["A1", "A2", "B1"]);
}

#[test]
fn constant_similarity_replaces_the_oldest() {
    let constant = |_: &StateKey, _: &StateKey| 1.0;
    let mut s = Selector::new(2, Some(&constant));
    let k = key(1, 1, Direction::North, false);
    let decisions: Vec<Decision> = [0.5, 0.9, 0.6, 0.7]
        .iter()
        .enumerate()
        .map(|(i, &imp)| s.offer(single(i, imp, k)))
        .collect();
    assert_eq!(
        decisions,
        [Decision::Added, Decision::Added, Decision::Replaced(0), Decision::Rejected]
    );
    let mut kept: Vec<f64> = s.entries().map(|t| t.importance).collect();
    kept.sort_by(f64::total_cmp);
    assert_eq!(kept, [0.6, 0.9]);
    // the plain rule would have kept 0.7 instead
    let mut p = plain(&[0.5, 0.9, 0.6, 0.7], 2);
    p.sort_by(f64::total_cmp);
    assert_eq!(p, [0.7, 0.9]);
}

#[test]
fn equal_importances_keep_the_first_arrivals() {
    let mut s = Selector::new(3, None);
    for i in 0..10 {
        s.offer(single(i, 0.25, key(1, 1, Direction::North, false)));
    }
    let kept: Vec<usize> = s.entries().map(|t| t.trace_index).collect();
    assert_eq!(kept, [0, 1, 2]);
}

#[test]
fn overlapping_centers_are_skipped() {
    let q = q_table();
    let traces = generate_traces(q, &EnvConfig::default(), &HighlightParams { n_traces: 1, ..Default::default() }).unwrap();
    let trace = &traces[0];
    assert!(trace.steps.len() >= 3);
    let mut s = Selector::new(5, None);
    assert_eq!(s.offer(candidate(q, trace, 0, 1, 1).unwrap()), Decision::Added);
    assert!(s.overlaps(0, 0) && s.overlaps(0, 2));
    assert!(!s.overlaps(1, 1));
    assert_eq!(s.offer(candidate(q, trace, 0, 2, 1).unwrap()), Decision::Overlap);
}

/// With budget 1 the kept highlight follows from a direct scan: take the
/// first candidate, then any later one outside the current window whose
/// importance is strictly larger.
#[test]
fn budget_one_matches_a_direct_scan() {
    let q = q_table();
    let params = HighlightParams {
        budget: 1,
        ..HighlightParams::default()
    };
    let traces = generate_traces(q, &EnvConfig::default(), &params).unwrap();
    let mut best: Option<(usize, usize, usize, usize, f64)> = None; // trace, step, lo, hi, imp
    for (ti, trace) in traces.iter().enumerate() {
        let n = trace.steps.len();
        for step in 0..n {
            let imp = importance(q.row(&StateKey::of(&trace.steps[step].0)).unwrap());
            let lo = step.saturating_sub(params.context);
            let hi = (step + params.context).min(n - 1);
            best = match best {
                Some((bt, _, blo, bhi, _)) if bt == ti && (blo..=bhi).contains(&step) => best,
                Some((_, _, _, _, bimp)) if imp <= bimp => best,
                _ => Some((ti, step, lo, hi, imp)),
            };
        }
    }
    let (ti, step, lo, hi, imp) = best.unwrap();
    let summary = select_from_traces(q, &traces, &params, None).unwrap();
    assert_eq!(summary.trajectories.len(), 1);
    let t = &summary.trajectories[0];
    assert_eq!((t.trace_index, t.center_step, t.window_start), (ti, step, lo));
    assert_eq!(t.window.len(), hi - lo + 1);
    assert_eq!(t.importance, imp);
}

/// Without context no candidate can overlap another, so the plain rule
/// keeps exactly the top-`budget` importances.
#[test]
fn zero_context_keeps_the_top_importances() {
    let q = q_table();
    let params = HighlightParams {
        n_traces: 60,
        context: 0,
        budget: 7,
        ..HighlightParams::default()
    };
    let traces = generate_traces(q, &EnvConfig::default(), &params).unwrap();
    let mut all: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.steps.iter().map(|(s, _)| importance(q.row(&StateKey::of(s)).unwrap())))
        .collect();
    all.sort_by(|a, b| b.total_cmp(a));
    let summary = select_from_traces(q, &traces, &params, None).unwrap();
    let mut kept: Vec<f64> = summary.trajectories.iter().map(|t| t.importance).collect();
    kept.sort_by(|a, b| b.total_cmp(a));
    assert_eq!(kept, all[..7]);
}

#[test]
fn summaries_are_sorted_sized_and_deterministic() {
    let q = q_table();
    let config = EnvConfig::default();
    for div in [false, true] {
        let params = HighlightParams {
            n_traces: 40,
            div,
            ..HighlightParams::default()
        };
        let a = run_highlights(q, &config, &params).unwrap();
        let b = run_highlights(q, &config, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectories.len(), params.budget);
        assert!(a
            .trajectories
            .windows(2)
            .all(|w| (w[0].trace_index, w[0].center_step) < (w[1].trace_index, w[1].center_step)));
        for t in &a.trajectories {
            assert!(t.window.len() <= 2 * params.context + 1);
            assert_eq!(StateKey::of(&t.window[t.center_step - t.window_start].0), t.center_state);
        }
        let text = render_highlights(&a, config.view_size);
        assert_eq!(text.matches("\nHighlight ").count(), params.budget);
        assert_eq!(text.lines().filter(|l| l.starts_with('*')).count(), params.budget);
    }
}

#[test]
fn empty_summary_renders_header_only() {
    let summary = HighlightSummary {
        trajectories: vec![],
        parameters: HighlightParams {
            div: true,
            ..HighlightParams::default()
        },
    };
    assert_eq!(
        render_highlights(&summary, 7),
        "HIGHLIGHTS-DIV summary: 0 trajectories (traces=300, context=5, budget=20)\n"
    );
}

#[test]
fn hamming_distance_counts_differing_fields() {
    let a = key(1, 1, Direction::North, false);
    assert_eq!(hamming_distance(&a, &a), 0.0);
    assert_eq!(hamming_distance(&a, &key(2, 2, Direction::East, true)), 4.0);
    let mut opened = a;
    opened.door_locked = false;
    opened.door_open = true;
    assert_eq!(hamming_distance(&a, &opened), 1.0);
}

proptest! {
    #[test]
    fn importance_is_the_spread(row in proptest::collection::vec(-10.0f64..10.0, 6), shift in -5.0f64..5.0) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let imp = importance(&row);
        prop_assert!(imp >= 0.0);
        prop_assert_eq!(imp, max - min);
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        prop_assert!((importance(&shifted) - imp).abs() < 1e-9);
        let mut reversed = row.clone();
        reversed.reverse();
        prop_assert_eq!(importance(&reversed), imp);
    }

    #[test]
    fn plain_rule_keeps_top_b(imps in proptest::collection::vec(0.0f64..1.0, 0..40), budget in 1usize..8) {
        let mut kept = plain(&imps, budget);
        kept.sort_by(|a, b| b.total_cmp(a));
        let mut all = imps.clone();
        all.sort_by(|a, b| b.total_cmp(a));
        all.truncate(budget);
        prop_assert_eq!(kept, all);
    }
}
