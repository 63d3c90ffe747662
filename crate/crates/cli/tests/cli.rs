use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polsum_cli::fixtures::ExpectedScores;
use polsum_cli::manifest::RunManifest;
use polsum_core::evaluation::CorpusReport;

fn polsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polsum"))
        .args(args)
        .output()
        .expect("spawn polsum")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("teb.jsonl");
    assert_eq!(code(&polsum(&["collect", "--out", s(&out)])), 2);
    assert_eq!(code(&polsum(&["collect", "--policy", "clever", "--out", s(&out)])), 2);
    assert_eq!(
        code(&polsum(&["collect", "--policy", "goal", "--episodes", "0", "--out", s(&out)])),
        2
    );
    assert_eq!(
        code(&polsum(&["collect", "--policy", "goal", "--width", "3", "--out", s(&out)])),
        2
    );
    let bad = dir.path().join("env.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(
        code(&polsum(&["collect", "--policy", "goal", "--config", s(&bad), "--out", s(&out)])),
        2
    );
    let http = dir.path().join("llm.json");
    fs::write(&http, r#"{"backend": "http"}"#).unwrap();
    fs::write(&out, "").unwrap();
    assert_eq!(
        code(&polsum(&["summarize", "--teb", s(&out), "--config", s(&http), "--out", s(&dir.path().join("x.json"))])),
        2
    );
    assert!(!out.with_extension("jsonl.manifest.json").exists());
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = dir.path().join("summary.json");
    let o = polsum(&["summarize", "--teb", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.jsonl"));

    let broken = dir.path().join("broken.jsonl");
    fs::write(
        &broken,
        r#"{"episode_id":1,"step_number":2,"obs_caption":"x","act_caption":"y","cumulative_reward":0.0}"#,
    )
    .unwrap();
    let o = polsum(&["summarize", "--teb", s(&broken), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step_number must start at 1"));

    let ann = dir.path().join("ann.json");
    fs::write(&ann, "").unwrap();
    assert_eq!(code(&polsum(&["score", "--annotations", s(&ann), "--out", s(&out)])), 3);

    let unwritable = dir.path().join("no/such/dir/teb.jsonl");
    assert_eq!(
        code(&polsum(&["collect", "--policy", "goal", "--episodes", "2", "--out", s(&unwritable)])),
        3
    );
}

#[test]
fn shipped_fixtures_match_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    assert_eq!(code(&polsum(&["fixtures", "--out", s(&out)])), 0);
    for name in ["table3_annotations.json", "table3_expected.json", "pipeline_annotations.json"] {
        assert_eq!(
            fs::read(out.join(name)).unwrap(),
            fs::read(shipped(name)).unwrap(),
            "{name} is stale; regenerate with `polsum fixtures --out fixtures`"
        );
    }
    let manifest = out.join("manifest.json");
    assert_eq!(RunManifest::load(&manifest).unwrap().outputs.len(), 6);
    assert_eq!(code(&polsum(&["replay", "--manifest", s(&manifest)])), 0);
}

#[test]
fn table3_scores_reproduce_the_published_means() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.json");
    let o = polsum(&["score", "--annotations", s(&shipped("table3_annotations.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Unlock Goal-Directed"));

    let report: CorpusReport = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let expected: ExpectedScores =
        serde_json::from_slice(&fs::read(shipped("table3_expected.json")).unwrap()).unwrap();
    assert_eq!(report.agents.len(), expected.agents.len());
    for (got, want) in report.agents.iter().zip(&expected.agents) {
        assert_eq!(got.agent.as_deref(), Some(want.agent.as_str()));
        assert!((got.recall - want.recall).abs() <= expected.tolerance, "{} recall {}", want.agent, got.recall);
        assert!(
            (got.precision - want.precision).abs() <= expected.tolerance,
            "{} precision {}",
            want.agent,
            got.precision
        );
    }
    assert!((report.mean_recall - expected.mean_recall).abs() <= expected.tolerance);
    assert!((report.mean_precision - expected.mean_precision).abs() <= expected.tolerance);
}

#[test]
fn pipeline_is_replayable_and_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let teb = dir.path().join("teb.jsonl");
    let summary = dir.path().join("summary.json");
    let hl = dir.path().join("highlights.txt");
    let run = |args: &[&str]| {
        let o = polsum(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["collect", "--policy", "random", "--episodes", "8", "--seed", "5", "--out", s(&teb)]);
    run(&["summarize", "--teb", s(&teb), "--k", "3", "--kappa", "6000", "--out", s(&summary)]);
    run(&["highlights", "--traces", "20", "--budget", "4", "--div", "--out", s(&hl)]);

    let m = RunManifest::load(&RunManifest::path_for(&summary)).unwrap();
    assert_eq!(m.command, "summarize");
    assert_eq!(m.inputs.len(), 1);
    assert!(m.args.iter().all(|a| !a.ends_with("summary.json") || Path::new(a).is_absolute()));

    for out in [&teb, &summary, &hl] {
        let manifest = RunManifest::path_for(out);
        run(&["replay", "--manifest", s(&manifest)]);
    }

    // recorded paths are absolute, so replay works from any directory
    let o = Command::new(env!("CARGO_BIN_EXE_polsum"))
        .current_dir(std::env::temp_dir())
        .args(["replay", "--manifest", s(&RunManifest::path_for(&summary))])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);

    fs::write(&teb, fs::read_to_string(&teb).unwrap().replacen("turn", "spin", 1)).unwrap();
    let o = polsum(&["replay", "--manifest", s(&RunManifest::path_for(&summary))]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("changed"));
}

#[test]
fn in_process_entry_point_matches_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert_eq!(polsum_cli::run(["polsum", "collect", "--policy", "short", "--episodes", "3", "--out", s(&a)]), 0);
    assert_eq!(code(&polsum(&["collect", "--policy=short", "--episodes=3", &format!("--out={}", s(&b))])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(polsum_cli::run(["polsum", "collect"]), 2);
}
