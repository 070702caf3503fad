use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tapersona::coding::Dimension;
use tapersona::config::PipelineConfig;
use tapersona::llm::{MockProvider, Provider};
use tapersona::pipeline::{build_provider, Pipeline, RunStatus};
use tapersona::review::{ReviewDecision, ThemeAction};
use tapersona::store::{read_manifest, ManifestEvent, RunStore};
use tapersona_review::{router, ServiceState};
use tower::ServiceExt;

const RUN: &str = "svc";

/// A mock run halted at the review gate.
fn gated_run() -> (tempfile::TempDir, RunStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::new(dir.path());
    let config = PipelineConfig::default();
    let mut p = Pipeline::start(store.clone(), RUN, config.clone(), build_provider(&config).unwrap()).unwrap();
    let summary = p.run(None).unwrap();
    assert!(matches!(summary.status, RunStatus::AwaitingDecision { .. }));
    (dir, store)
}

fn app(store: &RunStore, provider: Option<Arc<dyn Provider>>) -> Router {
    router(ServiceState::new(store.clone(), provider))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn keep_all(store: &RunStore, dim: Dimension) -> ReviewDecision {
    let p = Pipeline::resume(store.clone(), RUN, None).unwrap();
    ReviewDecision::keep_all(&p.baseline(dim).unwrap(), "analyst-a")
}

#[tokio::test]
async fn reads_are_side_effect_free_and_repeatable() {
    let (_dir, store) = gated_run();
    let app = app(&store, None);
    let (status, runs) = call(&app, "GET", "/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(runs, json!([RUN]));

    let before = std::fs::read(store.manifest_path(RUN)).unwrap();
    let (s1, a) = call(&app, "GET", &format!("/runs/{RUN}/consistency/challenge"), None).await;
    let (s2, b) = call(&app, "GET", &format!("/runs/{RUN}/consistency/challenge"), None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(a["rows"].as_array().unwrap().len(), 12);
    assert_eq!(std::fs::read(store.manifest_path(RUN)).unwrap(), before);

    for uri in [
        format!("/runs/{RUN}/codebooks/need/raw"),
        format!("/runs/{RUN}/codebooks/need/reduced"),
        format!("/runs/{RUN}/themebooks/need/baseline"),
        format!("/runs/{RUN}/themebooks/need/variants"),
        format!("/runs/{RUN}/state"),
        format!("/runs/{RUN}/manifest"),
        format!("/runs/{RUN}/artifacts/themebook"),
    ] {
        let (status, _) = call(&app, "GET", &uri, None).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
    }
}

#[tokio::test]
async fn unknown_run_and_artifact_are_404() {
    let (_dir, store) = gated_run();
    let app = app(&store, None);
    assert_eq!(call(&app, "GET", "/runs/nope/consistency/need", None).await.0, StatusCode::NOT_FOUND);
    let missing = "0".repeat(64);
    assert_eq!(
        call(&app, "GET", &format!("/runs/{RUN}/artifacts/persona/{missing}"), None).await.0,
        StatusCode::NOT_FOUND
    );
    // not finalized yet
    assert_eq!(
        call(&app, "GET", &format!("/runs/{RUN}/themebooks/need/final"), None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn incomplete_decision_gets_diagnostics() {
    let (_dir, store) = gated_run();
    let app = app(&store, None);
    let mut d = keep_all(&store, Dimension::Challenge);
    d.actions.pop();
    let (status, body) = call(&app, "POST", &format!("/runs/{RUN}/decisions"), Some(json!(d))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error_class"], "InvalidDecision");
    assert_eq!(body["diagnostics"][0]["kind"], "uncovered");
}

#[tokio::test]
async fn replacement_decision_is_recorded_and_used_by_finalize() {
    let (_dir, store) = gated_run();
    let app = app(&store, None);
    let (_, variants) = call(&app, "GET", &format!("/runs/{RUN}/themebooks/challenge/variants"), None).await;
    let replacement = variants[0]["themes"][0]["theme_id"].as_str().unwrap().to_owned();

    let mut d = keep_all(&store, Dimension::Challenge);
    let last = d.actions.len() - 1;
    let replaced = d.actions[last].baseline_theme_id.clone().unwrap();
    d.actions[last] = ThemeAction::replace(&replaced, &replacement);
    let (status, body) = call(&app, "POST", &format!("/runs/{RUN}/decisions"), Some(json!(d))).await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let manifest = read_manifest(&store.manifest_path(RUN)).unwrap();
    let recorded = manifest.entries.iter().any(|e| {
        matches!(&e.event, ManifestEvent::Decision(r) if r.decided_by == "analyst-a" && r.decision_digest == body["digest"])
    });
    assert!(recorded, "decision must be in the manifest before the response");

    let (status, _) = call(&app, "POST", &format!("/runs/{RUN}/decisions"), Some(json!(keep_all(&store, Dimension::Need)))).await;
    assert_eq!(status, StatusCode::OK);

    let mut p = Pipeline::resume(store.clone(), RUN, None).unwrap();
    p.finalize(Dimension::Challenge).unwrap();
    let book = p.final_book(Dimension::Challenge).unwrap();
    assert_eq!(book.themes.len(), 12);
    assert_eq!(book.themes[last].theme_id, replacement);

    // a decision after finalization is refused
    let (status, _) = call(&app, "POST", &format!("/runs/{RUN}/decisions"), Some(json!(d))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

async fn finalized(store: &RunStore, app: &Router) {
    for dim in Dimension::ALL {
        let (status, _) = call(app, "POST", &format!("/runs/{RUN}/decisions"), Some(json!(keep_all(store, dim)))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let mut p = Pipeline::resume(store.clone(), RUN, None).unwrap();
    for dim in Dimension::ALL {
        p.finalize(dim).unwrap();
    }
}

#[tokio::test]
async fn manual_persona_then_trace() {
    let (_dir, store) = gated_run();
    let app = app(&store, None);
    let body = json!({
        "need_pair": ["need-baseline-01", "need-baseline-02"],
        "challenge_pair": ["challenge-baseline-01", "challenge-baseline-02"],
        "decided_by": "analyst-b",
    });
    let (status, _) = call(&app, "POST", &format!("/runs/{RUN}/personas"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT, "themes are not final yet");

    finalized(&store, &app).await;
    let (status, persona) = call(&app, "POST", &format!("/runs/{RUN}/personas"), Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{persona}");
    assert_eq!(persona["artifact"]["source_selection"]["mode"], "manual");
    let manifest = read_manifest(&store.manifest_path(RUN)).unwrap();
    assert!(manifest
        .entries
        .iter()
        .any(|e| matches!(&e.event, ManifestEvent::Selection(r) if r.decided_by == "analyst-b")));

    let digest = persona["digest"].as_str().unwrap();
    let (status, trace) = call(&app, "POST", &format!("/runs/{RUN}/traces"), Some(json!({ "persona_digest": digest }))).await;
    assert_eq!(status, StatusCode::OK, "{trace}");
    assert_eq!(trace["artifact"]["quote_match"]["similarity"], 1.0);

    let (_, listed) = call(&app, "GET", &format!("/runs/{RUN}/personas"), None).await;
    assert_eq!(listed.as_array().unwrap().len(), 1);

    let bad = json!({
        "need_pair": ["need-baseline-01", "no-such-theme"],
        "challenge_pair": ["challenge-baseline-01", "challenge-baseline-02"],
        "decided_by": "analyst-b",
    });
    let (status, body) = call(&app, "POST", &format!("/runs/{RUN}/personas"), Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error_class"], "UnknownTheme");
}

#[tokio::test]
async fn generation_failure_is_502_with_error_class() {
    let (_dir, store) = gated_run();
    finalized(&store, &app(&store, None)).await;
    // a mock with nothing registered misses every request
    let app = app(&store, Some(Arc::new(MockProvider::new())));
    let body = json!({
        "need_pair": ["need-baseline-01", "need-baseline-02"],
        "challenge_pair": ["challenge-baseline-01", "challenge-baseline-01"],
        "decided_by": "analyst-b",
    });
    let (status, body) = call(&app, "POST", &format!("/runs/{RUN}/personas"), Some(body)).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error_class"], "MockMiss");
}
