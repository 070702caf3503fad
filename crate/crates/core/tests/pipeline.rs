use tapersona::coding::Dimension;
use tapersona::config::PipelineConfig;
use tapersona::llm::PurposeTag;
use tapersona::pipeline::{build_provider, replay_run, Pipeline, RunStatus};
use tapersona::review::{DecisionFile, ReviewDecision};
use tapersona::store::RunStore;

fn keep_all(p: &Pipeline) -> DecisionFile {
    DecisionFile {
        decisions: Dimension::ALL
            .iter()
            .map(|&d| ReviewDecision::keep_all(&p.baseline(d).unwrap(), "tester"))
            .collect(),
    }
}

#[test]
fn gate_then_resume_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::new(dir.path());
    let config = PipelineConfig::default();
    let mut p = Pipeline::start(store.clone(), "r1", config.clone(), build_provider(&config).unwrap()).unwrap();
    let summary = p.run(None).unwrap();
    assert!(matches!(summary.status, RunStatus::AwaitingDecision { .. }), "{summary:?}");
    let decisions = keep_all(&p);
    drop(p);

    let mut p = Pipeline::resume(store.clone(), "r1", None).unwrap();
    let summary = p.run(Some(&decisions)).unwrap();
    assert_eq!(summary.status, RunStatus::Completed);
    let m = p.manifest().snapshot();
    assert_eq!(m.count_purpose(PurposeTag::CodeChallenges), 31);
    assert_eq!(m.count_purpose(PurposeTag::CodeNeeds), 31);
    assert_eq!(m.count_purpose(PurposeTag::GroupThemes), 2);
    assert_eq!(m.count_purpose(PurposeTag::VariabilityTest), 6);
    assert_eq!(m.count_purpose(PurposeTag::WritePersona), 1);

    let replay = replay_run(&store, "r1", "r1-replay").unwrap();
    assert!(replay.all_match(), "{replay:#?}");
}
