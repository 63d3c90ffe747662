use polsum_core::captioner::caption_observation;
use polsum_core::gridworld::{run_episode, Action, Direction, EnvConfig, GridState, Pos};
use polsum_core::policies::PolicyRef;
use proptest::prelude::*;

/// Whether `p` lies in the K×K window of an agent at `a` facing `dir`,
/// computed from projections onto the facing and right-hand axes.
fn in_window(a: Pos, dir: Direction, k: i32, p: Pos) -> bool {
    let (fx, fy) = dir.delta();
    let (rx, ry) = dir.right().delta();
    let (dx, dy) = (p.x - a.x, p.y - a.y);
    let forward = dx * fx + dy * fy;
    let right = dx * rx + dy * ry;
    (0..k).contains(&forward) && right.abs() <= k / 2
}

fn state_strategy() -> impl Strategy<Value = (GridState, usize)> {
    (6usize..=12, 6usize..=12, any::<u64>(), prop_oneof![Just(3usize), Just(7)], 0u32..6).prop_map(
        |(w, h, seed, k, carry_bits)| {
            let config = EnvConfig {
                width: w,
                height: h,
                view_size: k,
                ..EnvConfig::default()
            };
            let mut s = GridState::sample(&config, seed).unwrap();
            if carry_bits == 0 {
                s.key_pos = None;
                s.carrying_key = true;
            }
            (s, k)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn moving_objects_outside_the_window_is_invisible((s, k) in state_strategy(), tx in 1i32..11, ty in 1i32..11) {
        let target = Pos::new(tx, ty);
        prop_assume!(s.is_interior(target) && target != s.agent_pos && target != s.door_pos && Some(target) != s.key_pos);
        let base = s.observe(k);

        if let Some(key) = s.key_pos {
            let mut moved = s.clone();
            moved.key_pos = Some(target);
            let hidden = !in_window(s.agent_pos, s.agent_dir, k as i32, key)
                && !in_window(s.agent_pos, s.agent_dir, k as i32, target);
            if hidden {
                prop_assert_eq!(moved.observe(k), base.clone());
            } else {
                prop_assert_ne!(moved.observe(k), base.clone());
            }
        }

        let mut moved = s.clone();
        moved.door_pos = target;
        if !in_window(s.agent_pos, s.agent_dir, k as i32, s.door_pos)
            && !in_window(s.agent_pos, s.agent_dir, k as i32, target)
        {
            prop_assert_eq!(moved.observe(k), base);
        }
    }

    #[test]
    fn captions_stay_under_400_chars((s, k) in state_strategy()) {
        let caption = caption_observation(&s.observe(k));
        prop_assert!(caption.as_str().chars().count() <= 400, "{}", caption.as_str());
    }

    #[test]
    fn transitions_are_deterministic((s, _k) in state_strategy(), codes in proptest::collection::vec(0u8..6, 0..40)) {
        let actions: Vec<Action> = codes.iter().map(|&c| Action::from_index(c as usize).unwrap()).collect();
        let run = || {
            let mut st = s.clone();
            actions.iter().map(|&a| { st.apply(a); st.clone() }).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}

struct Stats {
    success: f64,
    mean_length: f64,
}

fn stats(policy: PolicyRef) -> Stats {
    let config = EnvConfig::default();
    let mut wins = 0;
    let mut steps = 0;
    for seed in 0..100 {
        let trace = run_episode(&policy, &config, seed).unwrap();
        assert!(trace.len() <= 70);
        assert_eq!(trace, run_episode(&policy, &config, seed).unwrap());
        let total = trace.total_reward();
        assert!((0.0..=1.0).contains(&total));
        for s in &trace.steps {
            assert!((0.0..=1.0).contains(&s.reward));
        }
        // only the final step can carry reward
        assert!(trace.steps[..trace.len() - 1].iter().all(|s| s.reward == 0.0));
        wins += trace.success() as usize;
        steps += trace.len();
    }
    Stats {
        success: wins as f64 / 100.0,
        mean_length: steps as f64 / 100.0,
    }
}

#[test]
fn goal_directed_policy_mostly_succeeds() {
    let s = stats(PolicyRef::goal_directed());
    assert!(s.success >= 0.9, "success {}", s.success);
    assert!(s.mean_length <= 30.0, "mean length {}", s.mean_length);
}

#[test]
fn random_policy_mostly_fails() {
    let s = stats(PolicyRef::random(0));
    assert!(s.success <= 0.05, "success {}", s.success);
    assert!(s.mean_length >= 60.0, "mean length {}", s.mean_length);
}

#[test]
fn short_sighted_policy_is_slower_than_goal_directed() {
    let goal = stats(PolicyRef::goal_directed());
    let short = stats(PolicyRef::short_sighted());
    assert!(short.mean_length > goal.mean_length);
}
