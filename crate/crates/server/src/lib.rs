//! HTTP service for live assistant sessions and batch jobs.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/healthz` | liveness, no auth |
//! | GET | `/v1/task` | task definition and activity palette |
//! | POST | `/v1/sessions` | create a session, returns handle and greeting |
//! | POST | `/v1/sessions/{id}/events` | apply a User or Wearable event |
//! | GET | `/v1/sessions/{id}/transcript` | full conversation so far |
//! | GET | `/v1/sessions/{id}/stream` | server-sent events: `snapshot`, then `dialogue` and `step` |
//! | DELETE | `/v1/sessions/{id}` | end a session |
//! | POST | `/v1/jobs/generate`, `/v1/jobs/dataset`, `/v1/jobs/evaluate` | batch jobs |
//!
//! When a bearer token is configured every `/v1` route requires it, either as
//! an `Authorization: Bearer` header or as an `access_token` query parameter
//! (browsers cannot set headers on an `EventSource`).

mod error;
pub mod jobs;
mod session;

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use procassist::backend::{BackendConfig, ChatBackend, RemoteChatConfig};
use procassist::config::{AppConfig, ConfigError};
use procassist::convo::{serialize_conversation, ClockTime, Conversation, Dialogue};
use procassist::engine::{EngineConfig, Session};
use procassist::eval::Scorer;
use procassist::prompt::Shots;
use procassist::{ActivityClass, StepInfo, TaskDef};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

pub use error::ApiError;
pub use session::{EventRequest, EventResponse, Registry, SessionHandle, Snapshot, StreamEvent};

/// Shared server state.
pub struct AppState {
    pub task: Arc<TaskDef>,
    pub engine: EngineConfig,
    pub default_backend: BackendConfig,
    pub scorer: Arc<dyn Scorer>,
    pub sessions: Registry,
    auth_token: Option<String>,
}

impl AppState {
    pub fn from_config(config: &AppConfig) -> Result<Self, ConfigError> {
        let auth_token =
            config.server.auth_token_env.as_deref().and_then(|v| std::env::var(v).ok()).filter(|t| !t.is_empty());
        Ok(AppState {
            task: Arc::new(config.load_task()?),
            engine: config.engine_config()?,
            default_backend: config.backend.clone(),
            scorer: Arc::from(config.scorer.build()),
            sessions: Registry::new(Duration::from_secs(config.server.idle_timeout_secs)),
            auth_token,
        })
    }

    pub fn with_auth_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    fn remote_config(&self) -> Option<&RemoteChatConfig> {
        match &self.default_backend {
            BackendConfig::Remote(cfg) => Some(cfg),
            _ => None,
        }
    }

    /// Resolves a backend id, or the configured default.
    pub fn backend(&self, id: Option<&str>) -> Result<Arc<dyn ChatBackend>, ApiError> {
        let cfg = match id {
            None => self.default_backend.clone(),
            Some(id) => {
                BackendConfig::from_id(id, self.remote_config()).map_err(|e| ApiError::BadConfig(e.to_string()))?
            }
        };
        cfg.build().map_err(|e| ApiError::BadConfig(e.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/task", get(get_task))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .route("/sessions/{id}/stream", get(stream_events))
        .route("/jobs/generate", post(job_generate))
        .route("/jobs/dataset", post(job_dataset))
        .route("/jobs/evaluate", post(job_evaluate))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(|| async { Json(json!({ "status": "ok" })) }))
        .nest("/v1", api)
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .with_state(state)
}

/// Serves until the listener fails, evicting idle sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let reaper = Arc::clone(&state);
    let period = (reaper.sessions.idle_timeout() / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            reaper.sessions.evict_idle();
        }
    });
    axum::serve(listener, router(state)).await
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(expected) = state.auth_token.as_deref() else {
        return next.run(req).await;
    };
    let from_header =
        req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    let from_query = req.uri().query().and_then(|q| q.split('&').find_map(|kv| kv.strip_prefix("access_token=")));
    if from_header.or(from_query) == Some(expected) {
        next.run(req).await
    } else {
        ApiError::Unauthorized.into_response()
    }
}

#[derive(Serialize)]
struct ActivityEntry {
    activity: ActivityClass,
    text: &'static str,
    label: &'static str,
    inert: bool,
}

async fn get_task(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let activities: Vec<ActivityEntry> = ActivityClass::ALL
        .into_iter()
        .map(|a| ActivityEntry { activity: a, text: a.surface(), label: a.label(), inert: a.is_inert() })
        .collect();
    Json(json!({ "task": state.task.as_ref(), "activities": activities }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateSession {
    backend: Option<String>,
    task: Option<String>,
    shots: Option<Shots>,
    start_time: Option<ClockTime>,
}

#[derive(Serialize)]
struct Created {
    #[serde(flatten)]
    handle: SessionHandle,
    greeting: Dialogue,
    step: StepInfo,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req: CreateSession = error::parse_body(&body)?;
    let task = match req.task.as_deref() {
        None => Arc::clone(&state.task),
        Some(id) if id == state.task.id => Arc::clone(&state.task),
        Some(id) => Arc::new(TaskDef::by_id(id).ok_or_else(|| ApiError::BadConfig(format!("unknown task {id:?}")))?),
    };
    let backend = state.backend(req.backend.as_deref())?;
    let mut engine = state.engine.clone();
    if let Some(shots) = req.shots {
        engine.prompt.shots = shots;
    }
    let shots = engine.prompt.shots;
    let session = Session::new(task, backend, engine).map_err(|e| ApiError::BadConfig(e.to_string()))?;
    let (handle, greeting, step) = state.sessions.insert(session, shots, req.start_time)?;
    log::info!("created session {} ({} backend)", handle.id, handle.backend);
    Ok((StatusCode::CREATED, Json(Created { handle, greeting, step })))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if state.sessions.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::NotFound(id))
    }
}

async fn post_event(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<EventResponse>, ApiError> {
    let req: EventRequest = error::parse_body(&body)?;
    Ok(Json(state.sessions.post_event(&id, req).await?))
}

#[derive(Serialize)]
struct Transcript {
    #[serde(flatten)]
    handle: SessionHandle,
    dialogues: Vec<Dialogue>,
    /// The dialogues in the line format.
    text: String,
    step: StepInfo,
}

async fn get_transcript(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Transcript>, ApiError> {
    let (handle, snap) = state.sessions.snapshot(&id).await?;
    let convo = Conversation { dialogues: snap.dialogues, source: None };
    Ok(Json(Transcript { handle, text: serialize_conversation(&convo), dialogues: convo.dialogues, step: snap.step }))
}

fn sse_event(name: &str, data: &impl Serialize) -> Event {
    Event::default().event(name).data(serde_json::to_string(data).expect("stream payload serializes"))
}

async fn stream_events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let (snapshot, rx) = state.sessions.subscribe(&id).await?;
    let first = stream::once(async move { Ok(sse_event("snapshot", &snapshot)) });
    // A lagging subscriber is disconnected; it reconnects and gets a fresh snapshot.
    let live = stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(ev) => Some((Ok(sse_event(ev.name(), &ev)), rx)),
            Err(broadcast::error::RecvError::Lagged(_) | broadcast::error::RecvError::Closed) => None,
        }
    });
    Ok(Sse::new(first.chain(live)).keep_alive(KeepAlive::default()))
}

async fn job_generate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<jobs::GenerateResult>, ApiError> {
    let job = error::parse_body(&body)?;
    Ok(Json(tokio::task::spawn_blocking(move || jobs::run_generate(&state, job)).await??))
}

async fn job_dataset(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<jobs::DatasetResult>, ApiError> {
    let job = error::parse_body(&body)?;
    Ok(Json(tokio::task::spawn_blocking(move || jobs::run_dataset(&state, job)).await??))
}

async fn job_evaluate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<jobs::EvaluateResult>, ApiError> {
    let job = error::parse_body(&body)?;
    Ok(Json(tokio::task::spawn_blocking(move || jobs::run_evaluate(&state, job)).await??))
}
