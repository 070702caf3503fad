use std::path::Path;
use std::process::{Command, Output};

use tapersona::coding::Dimension;
use tapersona::llm::PurposeTag;
use tapersona::pipeline::Pipeline;
use tapersona::review::{DecisionFile, ReviewDecision};
use tapersona::store::{read_manifest, RunStore};

fn tapersona(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tapersona"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .unwrap()
}

fn coding_calls(store: &RunStore, run: &str) -> usize {
    read_manifest(&store.manifest_path(run))
        .unwrap()
        .model_calls()
        .filter(|c| matches!(c.purpose, PurposeTag::CodeChallenges | PurposeTag::CodeNeeds))
        .count()
}

#[test]
fn run_stops_at_gate_then_resumes_without_recoding() {
    let dir = tempfile::tempdir().unwrap();
    let out = tapersona(dir.path(), &["--run-id", "r1", "run"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("awaiting review decision"));

    let store = RunStore::new(dir.path());
    assert_eq!(coding_calls(&store, "r1"), 62);

    let p = Pipeline::resume(store.clone(), "r1", None).unwrap();
    let file = DecisionFile {
        decisions: Dimension::ALL
            .iter()
            .map(|d| ReviewDecision::keep_all(&p.baseline(*d).unwrap(), "tester"))
            .collect(),
    };
    let decisions = dir.path().join("decisions.toml");
    std::fs::write(&decisions, file.to_toml()).unwrap();

    let out = tapersona(dir.path(), &["--run-id", "r1", "run", "--decisions", decisions.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(coding_calls(&store, "r1"), 62);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"]["status"], "completed");
}

#[test]
fn stage_commands_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    assert!(tapersona(w, &["ingest"]).status.success());
    let out = tapersona(w, &["evaluate", "--dimension", "challenge"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("consistency report"));
    assert_eq!(text.lines().filter(|l| l.contains("score")).count(), 12);

    let out = tapersona(w, &["finalize"]);
    assert_eq!(out.status.code(), Some(3));

    let out = tapersona(w, &["report"]);
    assert!(out.status.success());
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("## Model calls"));
    assert!(report.contains("| code_challenges | 31 |"));
}

#[test]
fn tuples_and_synth() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let out = tapersona(w, &["synth", "--out", w.join("corpus").to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_dir(w.join("corpus")).unwrap().count(), 14);

    let out = tapersona(w, &["tuples", "--dimension", "need"]);
    assert_eq!(out.status.code(), Some(1), "no final themes yet");
}

#[test]
fn config_flags_on_an_existing_run_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    assert!(tapersona(w, &["--seed", "5", "ingest"]).status.success());
    let out = tapersona(w, &["--seed", "6", "--provider", "mock", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let out = tapersona(w, &["show-config"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed = 5"));
}
