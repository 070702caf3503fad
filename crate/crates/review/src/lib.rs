//! Local HTTP API over a run store, for reviewing themes and requesting
//! personas from a browser.
//!
//! Bodies are JSON in the same shapes as the stored artifacts. Reads go
//! straight to the artifact files. Writes reopen the run's pipeline under a
//! single lock, so manifest appends stay serialized, and every successful
//! write is in the manifest before the response is sent.
//!
//! There is no authentication. Bind to loopback only.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tapersona::coding::{CodebookArtifact, Dimension};
use tapersona::llm::Provider;
use tapersona::persona::{manual_selection, Persona};
use tapersona::pipeline::{load_state, stage_key, Pipeline};
use tapersona::review::{validate_decision, ActionDiagnostic, ConsistencyReport, ReviewDecision};
use tapersona::store::{read_manifest, ArtifactKind, RunStore};
use tapersona::theming::ThemeBook;
use tapersona::trace::TraceReport;
use tapersona::Error;

pub struct ServiceState {
    store: RunStore,
    /// Used for persona generation instead of the run's configured provider.
    provider: Option<Arc<dyn Provider>>,
    writes: tokio::sync::Mutex<()>,
}

impl ServiceState {
    pub fn new(store: RunStore, provider: Option<Arc<dyn Provider>>) -> Arc<Self> {
        Arc::new(ServiceState {
            store,
            provider,
            writes: tokio::sync::Mutex::new(()),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, class: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error_class": class, "message": message.into() }),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    fn diagnostics(diags: Vec<ActionDiagnostic>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({
                "error_class": "InvalidDecision",
                "message": format!("{} problem(s) with the decision", diags.len()),
                "diagnostics": diags,
            }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownRun(_) | Error::UnknownArtifact(_) => StatusCode::NOT_FOUND,
            Error::UnknownTheme(_)
            | Error::IncompleteDecision(_)
            | Error::DimensionMismatch { .. }
            | Error::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::InvalidDecision(_) | Error::InvalidRequest(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.class(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map(Json)
}

fn require_run(store: &RunStore, run: &str) -> Result<(), ApiError> {
    if store.run_exists(run) {
        Ok(())
    } else {
        Err(Error::UnknownRun(run.to_owned()).into())
    }
}

fn parse_dim(s: &str) -> Result<Dimension, ApiError> {
    s.parse().map_err(|_| ApiError::not_found(format!("dimension {s}")))
}

fn parse_kind(s: &str) -> Result<ArtifactKind, ApiError> {
    ArtifactKind::ALL
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| ApiError::not_found(format!("artifact kind {s}")))
}

/// Digests a stage produced, or 404 if it has not run.
fn stage_outputs(store: &RunStore, run: &str, key: &str) -> Result<Vec<String>, ApiError> {
    require_run(store, run)?;
    load_state(store, run)?
        .stages
        .get(key)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("stage {key} of run {run}")))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{run}/state", get(run_state))
        .route("/runs/{run}/manifest", get(manifest))
        .route("/runs/{run}/artifacts/{kind}", get(list_artifacts))
        .route("/runs/{run}/artifacts/{kind}/{digest}", get(artifact))
        .route("/runs/{run}/codebooks/{dim}/{stage}", get(codebook))
        .route("/runs/{run}/themebooks/{dim}/{stage}", get(themebook))
        .route("/runs/{run}/themebooks/{dim}/variants", get(variants))
        .route("/runs/{run}/consistency/{dim}", get(consistency))
        .route("/runs/{run}/decisions/{dim}", get(decision))
        .route("/runs/{run}/decisions", axum::routing::post(submit_decision))
        .route("/runs/{run}/personas", get(personas).post(request_persona))
        .route("/runs/{run}/traces", get(traces).post(request_trace))
        .with_state(state)
}

/// Serve on `addr` until the process is stopped.
pub async fn serve(store: RunStore, addr: SocketAddr, provider: Option<Arc<dyn Provider>>) -> std::io::Result<()> {
    if !addr.ip().is_loopback() {
        log::warn!("review service bound to non-loopback address {addr}; it has no authentication");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(ServiceState::new(store, provider))).await
}

async fn list_runs(State(s): State<Arc<ServiceState>>) -> ApiResult<Vec<String>> {
    blocking(move || Ok(s.store.list_runs()?)).await
}

async fn run_state(State(s): State<Arc<ServiceState>>, Path(run): Path<String>) -> ApiResult<Value> {
    blocking(move || {
        require_run(&s.store, &run)?;
        Ok(serde_json::to_value(load_state(&s.store, &run)?).expect("state serializes"))
    })
    .await
}

async fn manifest(State(s): State<Arc<ServiceState>>, Path(run): Path<String>) -> ApiResult<Value> {
    blocking(move || {
        require_run(&s.store, &run)?;
        let m = read_manifest(&s.store.manifest_path(&run))?;
        Ok(serde_json::to_value(m).expect("manifest serializes"))
    })
    .await
}

async fn list_artifacts(State(s): State<Arc<ServiceState>>, Path((run, kind)): Path<(String, String)>) -> ApiResult<Vec<String>> {
    blocking(move || {
        require_run(&s.store, &run)?;
        Ok(s.store.list_artifacts(&run, parse_kind(&kind)?)?)
    })
    .await
}

async fn artifact(
    State(s): State<Arc<ServiceState>>,
    Path((run, kind, digest)): Path<(String, String, String)>,
) -> ApiResult<Value> {
    blocking(move || {
        require_run(&s.store, &run)?;
        let kind = parse_kind(&kind)?;
        let env = s.store.load_artifact(&run, &digest)?;
        if env.artifact_kind != kind {
            return Err(ApiError::not_found(format!("{kind} {digest}")));
        }
        Ok(serde_json::to_value(env).expect("envelope serializes"))
    })
    .await
}

async fn codebook(
    State(s): State<Arc<ServiceState>>,
    Path((run, dim, stage)): Path<(String, String, String)>,
) -> ApiResult<CodebookArtifact> {
    blocking(move || {
        let dim = parse_dim(&dim)?;
        let key = match stage.as_str() {
            "raw" => stage_key("code", dim),
            "reduced" => stage_key("reduce", dim),
            other => return Err(ApiError::not_found(format!("codebook stage {other}"))),
        };
        let d = stage_outputs(&s.store, &run, &key)?;
        Ok(s.store.load(&run, &d[0])?)
    })
    .await
}

async fn themebook(
    State(s): State<Arc<ServiceState>>,
    Path((run, dim, stage)): Path<(String, String, String)>,
) -> ApiResult<ThemeBook> {
    blocking(move || {
        let dim = parse_dim(&dim)?;
        let key = match stage.as_str() {
            "baseline" => stage_key("theme", dim),
            "final" => stage_key("finalize", dim),
            other => return Err(ApiError::not_found(format!("theme book stage {other}"))),
        };
        let d = stage_outputs(&s.store, &run, &key)?;
        Ok(s.store.load(&run, &d[0])?)
    })
    .await
}

async fn variants(State(s): State<Arc<ServiceState>>, Path((run, dim)): Path<(String, String)>) -> ApiResult<Vec<ThemeBook>> {
    blocking(move || {
        let d = stage_outputs(&s.store, &run, &stage_key("evaluate", parse_dim(&dim)?))?;
        d[1..].iter().map(|d| Ok(s.store.load(&run, d)?)).collect()
    })
    .await
}

async fn consistency(
    State(s): State<Arc<ServiceState>>,
    Path((run, dim)): Path<(String, String)>,
) -> ApiResult<ConsistencyReport> {
    blocking(move || {
        let d = stage_outputs(&s.store, &run, &stage_key("evaluate", parse_dim(&dim)?))?;
        Ok(s.store.load(&run, &d[0])?)
    })
    .await
}

async fn decision(State(s): State<Arc<ServiceState>>, Path((run, dim)): Path<(String, String)>) -> ApiResult<ReviewDecision> {
    blocking(move || {
        let d = stage_outputs(&s.store, &run, &stage_key("decision", parse_dim(&dim)?))?;
        Ok(s.store.load(&run, &d[0])?)
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Stored<T> {
    pub digest: String,
    pub artifact: T,
}

fn all_of<T: serde::de::DeserializeOwned>(store: &RunStore, run: &str, kind: ArtifactKind) -> Result<Vec<Stored<T>>, ApiError> {
    require_run(store, run)?;
    store
        .list_artifacts(run, kind)?
        .into_iter()
        .map(|digest| {
            let artifact = store.load(run, &digest)?;
            Ok(Stored { digest, artifact })
        })
        .collect()
}

async fn personas(State(s): State<Arc<ServiceState>>, Path(run): Path<String>) -> ApiResult<Vec<Stored<Persona>>> {
    blocking(move || all_of(&s.store, &run, ArtifactKind::Persona)).await
}

async fn traces(State(s): State<Arc<ServiceState>>, Path(run): Path<String>) -> ApiResult<Vec<Stored<TraceReport>>> {
    blocking(move || all_of(&s.store, &run, ArtifactKind::TraceReport)).await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionAccepted {
    pub digest: String,
}

async fn submit_decision(
    State(s): State<Arc<ServiceState>>,
    Path(run): Path<String>,
    Json(decision): Json<ReviewDecision>,
) -> ApiResult<DecisionAccepted> {
    let _guard = s.writes.lock().await;
    let s2 = s.clone();
    blocking(move || {
        let s = s2;
        require_run(&s.store, &run)?;
        let mut p = Pipeline::resume(s.store.clone(), &run, s.provider.clone())?;
        let dim = decision.dimension;
        if p.state().get(&stage_key("evaluate", dim)).is_none() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "NotEvaluated",
                format!("{dim} themes have not been evaluated"),
            ));
        }
        let diags = validate_decision(&decision, &p.baseline(dim)?, &p.variants(dim)?);
        if !diags.is_empty() {
            return Err(ApiError::diagnostics(diags));
        }
        let digest = p.submit_decision(&decision)?;
        Ok(DecisionAccepted { digest })
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonaRequest {
    pub need_pair: (String, String),
    pub challenge_pair: (String, String),
    #[serde(default)]
    pub seed: u64,
    pub decided_by: String,
}

async fn request_persona(
    State(s): State<Arc<ServiceState>>,
    Path(run): Path<String>,
    Json(req): Json<PersonaRequest>,
) -> ApiResult<Stored<Persona>> {
    let _guard = s.writes.lock().await;
    let s2 = s.clone();
    blocking(move || {
        let s = s2;
        require_run(&s.store, &run)?;
        let mut p = Pipeline::resume(s.store.clone(), &run, s.provider.clone())?;
        let (needs, challenges) = match (p.final_book(Dimension::Need), p.final_book(Dimension::Challenge)) {
            (Ok(n), Ok(c)) => (n, c),
            _ => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "NotFinalized",
                    "themes of both dimensions must be final before writing personas",
                ))
            }
        };
        let selection = manual_selection(&needs, &challenges, req.need_pair, req.challenge_pair, req.seed)?;
        let digests = p.generate_personas(&[selection], &req.decided_by, false).map_err(|e| {
            ApiError::new(StatusCode::BAD_GATEWAY, e.class(), e.to_string())
        })?;
        let digest = digests.into_iter().next().expect("one persona per selection");
        let artifact = p.load(&digest)?;
        Ok(Stored { digest, artifact })
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRequest {
    pub persona_digest: String,
}

async fn request_trace(
    State(s): State<Arc<ServiceState>>,
    Path(run): Path<String>,
    Json(req): Json<TraceRequest>,
) -> ApiResult<Stored<TraceReport>> {
    let _guard = s.writes.lock().await;
    let s2 = s.clone();
    blocking(move || {
        let s = s2;
        require_run(&s.store, &run)?;
        let mut p = Pipeline::resume(s.store.clone(), &run, s.provider.clone())?;
        let digest = p.trace(&req.persona_digest)?;
        let artifact = p.load(&digest)?;
        Ok(Stored { digest, artifact })
    })
    .await
}
