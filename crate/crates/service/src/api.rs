//! HTTP routes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tunebench_agents::pipeline::TranscriptEntry;
use tunebench_agents::PromptBook;
use tunebench_core::metrics::{reports_by_model, render_table, ModelReport};
use tunebench_core::{HistoryRecord, Track};

use crate::config::Config;
use crate::engine::{Engine, EngineError, EngineRun, Engines, PlaylistTrack, DEFAULT_RECOMMENDATIONS};
use crate::session::{Answer, Progress, SessionError, SessionRecord, SessionState, SessionView};
use crate::store::{Store, StoreError, StoreRecord};

pub const DEFAULT_CATALOG_LIMIT: usize = 300;

/// Engines compared in every blind session.
pub const SESSION_ENGINES: [Engine; 3] = [Engine::Traditional, Engine::Llama, Engine::Gemini];

pub struct AppState {
    store: Arc<dyn Store>,
    engines: Engines,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(store: Arc<dyn Store>, engines: Engines) -> Self {
        Self {
            store,
            engines,
            session_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_config(store: Arc<dyn Store>, config: Config, base_url: impl Into<String>) -> Self {
        let engines = Engines::new(store.clone(), Arc::new(PromptBook::default()), config, base_url);
        Self::new(store, engines)
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    pub fn engines(&self) -> &Engines {
        &self.engines
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.session_locks.lock().expect("session lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Validation(String),
    Conflict(String),
    NotConfigured(String),
    Engine {
        message: String,
        task: Option<String>,
        transcript: Vec<TranscriptEntry>,
    },
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "store failure");
        ApiError::Internal(e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NotConfigured { .. } => ApiError::NotConfigured(e.to_string()),
            EngineError::NotFound(m) => ApiError::NotFound(m),
            EngineError::Store(s) => s.into(),
            EngineError::Failed { .. } => {
                let message = e.to_string();
                let EngineError::Failed { task, transcript, .. } = e else {
                    unreachable!()
                };
                ApiError::Engine {
                    message,
                    task,
                    transcript,
                }
            }
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::UnknownArm(_) | SessionError::UnknownTrack { .. } => ApiError::NotFound(e.to_string()),
            SessionError::RatingOutOfRange(_) => ApiError::Validation(e.to_string()),
            SessionError::AlreadyComplete => ApiError::Conflict(e.to_string()),
            SessionError::ShortPlaylist { .. } => ApiError::Engine {
                message: e.to_string(),
                task: None,
                transcript: Vec::new(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match &self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Validation(m) => (StatusCode::UNPROCESSABLE_ENTITY, "validation", m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ApiError::NotConfigured(m) => (StatusCode::SERVICE_UNAVAILABLE, "not_configured", m),
            ApiError::Engine { message, .. } => (StatusCode::BAD_GATEWAY, "engine_failed", message),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        let mut body = json!({ "error": code, "message": message });
        if let ApiError::Engine { task, transcript, .. } = &self {
            body["task"] = json!(task);
            body["transcript"] = json!(transcript);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/getAllDataEniac", get(all_data))
        .route("/getUserData/{user_id}", get(user_data))
        .route("/recommend", post(recommend))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/responses", post(post_response))
        .route("/sessions/{id}/rating", post(post_rating))
        .route("/sessions/{id}/export", get(export_session))
        .route("/report", get(report))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

#[derive(Deserialize)]
struct LimitQuery {
    limit: Option<usize>,
}

async fn all_data(State(state): State<Arc<AppState>>, Query(q): Query<LimitQuery>) -> ApiResult<Json<Vec<Track>>> {
    let catalog = state
        .store
        .catalog()?
        .ok_or_else(|| ApiError::NotFound("no catalog has been ingested".into()))?;
    Ok(Json(catalog.head(q.limit.unwrap_or(DEFAULT_CATALOG_LIMIT)).to_vec()))
}

async fn user_data(State(state): State<Arc<AppState>>, Path(user_id): Path<String>) -> ApiResult<Json<Vec<HistoryRecord>>> {
    let history = state
        .store
        .history(&user_id)?
        .ok_or_else(|| ApiError::NotFound(format!("unknown user {user_id:?}")))?;
    Ok(Json(history.to_records()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub user_id: String,
    pub engine: Engine,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub user_id: String,
    pub engine: Engine,
    pub recommendations: Vec<PlaylistTrack>,
    pub inference_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inferred_genres: Vec<String>,
    /// Model picks that were not in the catalog.
    #[serde(default)]
    pub dropped: usize,
}

impl RecommendResponse {
    pub fn new(user_id: String, run: EngineRun) -> Self {
        Self {
            user_id,
            engine: run.engine,
            recommendations: run.tracks,
            inference_seconds: run.inference_seconds,
            inferred_genres: run.inferred_genres,
            dropped: run.dropped.len(),
        }
    }
}

async fn recommend(State(state): State<Arc<AppState>>, Json(req): Json<RecommendRequest>) -> ApiResult<Json<RecommendResponse>> {
    let k = req.k.unwrap_or(DEFAULT_RECOMMENDATIONS);
    if k == 0 {
        return Err(ApiError::Validation("k must be at least 1".into()));
    }
    let run = state.engines.run(req.engine, &req.user_id, k).await?;
    Ok(Json(RecommendResponse::new(req.user_id, run)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub user_id: String,
    pub seed: u64,
}

/// Runs the three engines concurrently and stores a new blind session.
pub async fn start_session(state: &AppState, user_id: &str, seed: u64) -> ApiResult<SessionRecord> {
    state.engines.check_inputs(user_id)?;
    let engines = &state.engines;
    let (a, b, c) = tokio::join!(
        engines.run(SESSION_ENGINES[0], user_id, DEFAULT_RECOMMENDATIONS),
        engines.run(SESSION_ENGINES[1], user_id, DEFAULT_RECOMMENDATIONS),
        engines.run(SESSION_ENGINES[2], user_id, DEFAULT_RECOMMENDATIONS),
    );
    let runs = [a?, b?, c?]
        .into_iter()
        .map(|run| (run.engine.model_label().expect("session engines have labels"), run))
        .collect();
    let session = SessionRecord::assemble(uuid::Uuid::new_v4().to_string(), user_id, seed, runs)?;
    state.store.put(StoreRecord::Session(session.clone()))?;
    tracing::info!(session = %session.session_id, user = user_id, seed, "session created");
    Ok(session)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let session = start_session(&state, &req.user_id, req.seed).await?;
    Ok((StatusCode::CREATED, Json(session.view())))
}

fn load_session(state: &AppState, id: &str) -> ApiResult<SessionRecord> {
    state
        .store
        .session(id)?
        .ok_or_else(|| ApiError::NotFound(format!("unknown session {id:?}")))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(load_session(&state, &id)?.view()))
}

async fn export_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionRecord>> {
    let session = load_session(&state, &id)?;
    if session.state != SessionState::Complete {
        return Err(ApiError::Conflict("session is still in progress".into()));
    }
    Ok(Json(session))
}

/// Applies one mutation under the session's lock, persisting sheets first
/// when the session completes.
async fn mutate(
    state: &AppState,
    id: &str,
    change: impl FnOnce(&mut SessionRecord) -> Result<Progress, SessionError>,
) -> ApiResult<Progress> {
    let lock = state.session_lock(id);
    let _guard = lock.lock().await;
    let mut session = load_session(state, id)?;
    let progress = change(&mut session)?;
    if let Some(sheets) = session.sheets() {
        state.store.put(StoreRecord::Sheets(sheets))?;
        tracing::info!(session = id, "session complete");
    }
    state.store.put(StoreRecord::Session(session))?;
    Ok(progress)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseRequest {
    pub blind_label: String,
    pub track_id: String,
    #[serde(deserialize_with = "tunebench_core::metrics::deserialize_binary")]
    pub like: bool,
    #[serde(deserialize_with = "tunebench_core::metrics::deserialize_binary")]
    pub known: bool,
}

async fn post_response(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ResponseRequest>,
) -> ApiResult<Json<Progress>> {
    let answer = Answer {
        like: req.like,
        known: req.known,
    };
    mutate(&state, &id, |s| s.record_response(&req.blind_label, &req.track_id, answer))
        .await
        .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingRequest {
    pub blind_label: String,
    pub rating: i64,
}

async fn post_rating(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<RatingRequest>,
) -> ApiResult<Json<Progress>> {
    mutate(&state, &id, |s| s.record_rating(&req.blind_label, req.rating))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    /// True when no session has been completed yet.
    pub empty: bool,
    pub n_sheets: usize,
    pub reports: Vec<ModelReport>,
}

pub fn build_report(store: &dyn Store) -> ApiResult<ReportBody> {
    let sheets = store.sheets()?;
    let reports = reports_by_model(&sheets).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(ReportBody {
        empty: sheets.is_empty(),
        n_sheets: sheets.len(),
        reports,
    })
}

pub fn report_text(body: &ReportBody) -> String {
    if body.empty {
        "no completed sessions\n".to_string()
    } else {
        render_table(&body.reports)
    }
}

async fn report(State(state): State<Arc<AppState>>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let body = build_report(state.store.as_ref())?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(body).into_response()),
        Some("text") => Ok(report_text(&body).into_response()),
        Some(other) => Err(ApiError::Validation(format!("unknown format {other:?}; use json or text"))),
    }
}

/// A server bound to a local port and running in the background.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    handle: tokio::task::JoinHandle<()>,
}

impl RunningServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

/// Binds `addr`, wires the engines to the bound address and serves in a
/// background task.
pub async fn spawn_server(store: Arc<dyn Store>, config: Config, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let base = format!("http://{}", loopback(addr));
    let state = Arc::new(AppState::from_config(store, config, base));
    let app = router(state.clone());
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok(RunningServer { addr, state, handle })
}

/// Address the service uses to call itself.
fn loopback(addr: SocketAddr) -> SocketAddr {
    if addr.ip().is_unspecified() {
        SocketAddr::from(([127, 0, 0, 1], addr.port()))
    } else {
        addr
    }
}
