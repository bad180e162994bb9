//! HTTP facade over the knowledge base, search index and decision engine.
//!
//! Routes (all JSON):
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/v1/{section}/autocomplete?q=&limit=` | array of strings |
//! | GET | `/v1/{section}/search?q=&limit=` | `{results, related_terms}` |
//! | GET | `/v1/{section}/codes/{code}?selected=a,b` | code details (+ `alerts`) |
//! | POST | `/v1/sessions` `{pc, pi}` | `{session_id, interaction}` |
//! | GET | `/v1/sessions/{id}` | `{session_id, status, interaction, progress}` |
//! | POST | `/v1/sessions/{id}/answer` `{state, answer}` | `{interaction}` |
//! | DELETE | `/v1/sessions/{id}` | `{session_id, status}` |

pub mod config;
pub mod error;
pub mod sessions;

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use sisco_core::api::{self, CodeDetailsBody, SearchBody, DEFAULT_AUTOCOMPLETE_LIMIT, DEFAULT_SEARCH_LIMIT};
use sisco_core::engine::{DecisionEngine, Interaction, ProgressEntry, SessionStatus};
use sisco_core::ingest::Bundle;
use sisco_core::text::{AttributeWeightTable, SearchIndex};
use sisco_core::Section;

pub use error::ApiError;
pub use sessions::{JournalEvent, ReplayReport, SessionStore};

pub type Clock = Arc<dyn Fn() -> SystemTime + Send + Sync>;

/// Immutable data plus the session store.
pub struct AppState {
    pub bundle: Bundle,
    pub index: SearchIndex,
    sessions: Mutex<SessionStore>,
    clock: Clock,
}

impl AppState {
    pub fn new(bundle: Bundle, sessions: SessionStore) -> Self {
        Self::with_clock(bundle, sessions, Arc::new(SystemTime::now))
    }

    pub fn with_clock(bundle: Bundle, sessions: SessionStore, clock: Clock) -> Self {
        let index = SearchIndex::build(&bundle.kb, AttributeWeightTable::default());
        AppState {
            bundle,
            index,
            sessions: Mutex::new(sessions),
            clock,
        }
    }

    /// In-memory sessions with the default idle TTL.
    pub fn in_memory(bundle: Bundle) -> Self {
        Self::new(bundle, SessionStore::new(config::DEFAULT_SESSION_TTL))
    }

    pub fn engine(&self) -> DecisionEngine<'_> {
        DecisionEngine::new(&self.bundle.tree, &self.bundle.procedure_sets, &self.bundle.kb)
    }

    fn sessions(&self) -> MutexGuard<'_, SessionStore> {
        // a panic while holding the lock leaves the map itself intact
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn now(&self) -> SystemTime {
        (self.clock)()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/{section}/autocomplete", get(autocomplete))
        .route("/v1/{section}/search", get(search))
        .route("/v1/{section}/codes/{code}", get(code_details))
        .route("/v1/sessions", post(start_session))
        .route("/v1/sessions/{id}", get(session_status).delete(cancel_session))
        .route("/v1/sessions/{id}/answer", post(answer_session))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NoRoute", "no such endpoint") })
        .with_state(state)
}

/// Router plus one JSON log line per request on standard output.
pub fn app(state: Arc<AppState>) -> Router {
    router(state).layer(middleware::from_fn(log_request))
}

async fn log_request(request: Request, next: Next) -> Response {
    let method = request.method().to_string();
    let path = request.uri().path().to_string();
    let started = Instant::now();
    let response = next.run(request).await;
    let line = serde_json::json!({
        "ts_ms": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0),
        "method": method,
        "path": path,
        "status": response.status().as_u16(),
        "duration_us": started.elapsed().as_micros() as u64,
    });
    println!("{line}");
    response
}

#[derive(Debug, Deserialize)]
struct TextParams {
    q: Option<String>,
    limit: Option<usize>,
}

fn params(query: Result<Query<TextParams>, QueryRejection>) -> Result<TextParams, ApiError> {
    query
        .map(|Query(p)| p)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn body<T>(json: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    json.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn autocomplete(
    State(app): State<Arc<AppState>>,
    Path(section): Path<String>,
    query: Result<Query<TextParams>, QueryRejection>,
) -> Result<Json<Vec<String>>, ApiError> {
    let section: Section = section.parse()?;
    let p = params(query)?;
    let q = p.q.unwrap_or_default();
    if q.trim().is_empty() {
        return Err(sisco_core::text::SearchError::EmptyQuery.into());
    }
    let limit = p.limit.unwrap_or(DEFAULT_AUTOCOMPLETE_LIMIT);
    Ok(Json(app.index.autocomplete(&q, section, limit)))
}

async fn search(
    State(app): State<Arc<AppState>>,
    Path(section): Path<String>,
    query: Result<Query<TextParams>, QueryRejection>,
) -> Result<Json<SearchBody>, ApiError> {
    let section: Section = section.parse()?;
    let p = params(query)?;
    let body = api::search_body(
        &app.index,
        section,
        &p.q.unwrap_or_default(),
        p.limit.unwrap_or(DEFAULT_SEARCH_LIMIT),
    )?;
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
struct DetailParams {
    selected: Option<String>,
}

async fn code_details(
    State(app): State<Arc<AppState>>,
    Path((section, code)): Path<(String, String)>,
    query: Result<Query<DetailParams>, QueryRejection>,
) -> Result<Json<CodeDetailsBody>, ApiError> {
    let section: Section = section.parse()?;
    let Query(p) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let selected: Option<Vec<String>> = p.selected.map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect()
    });
    Ok(Json(api::code_details_body(
        &app.bundle.kb,
        section,
        &code,
        selected.as_deref(),
    )?))
}

#[derive(Debug, Deserialize)]
pub struct StartRequest {
    pub pc: Vec<String>,
    #[serde(default)]
    pub pi: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartResponse {
    pub session_id: String,
    pub interaction: Interaction,
}

async fn start_session(
    State(app): State<Arc<AppState>>,
    request: Result<Json<StartRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<StartResponse>), ApiError> {
    let request = body(request)?;
    let id = uuid::Uuid::new_v4().to_string();
    let now = app.now();
    let interaction = app
        .sessions()
        .start(&app.engine(), id.clone(), &request.pc, &request.pi, now)?;
    Ok((
        StatusCode::CREATED,
        Json(StartResponse {
            session_id: id,
            interaction,
        }),
    ))
}

/// A single code or YES/NO may be sent bare instead of as a list.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub state: u32,
    pub answer: AnswerValue,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub interaction: Interaction,
}

async fn answer_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    request: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<AnswerResponse>, ApiError> {
    let request = body(request)?;
    let answer = match request.answer {
        AnswerValue::One(a) => vec![a],
        AnswerValue::Many(list) => list,
    };
    let now = app.now();
    let interaction = app
        .sessions()
        .answer(&app.engine(), &id, request.state, &answer, now)?;
    Ok(Json(AnswerResponse { interaction }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub session_id: String,
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interaction: Option<Interaction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress: Option<Vec<ProgressEntry>>,
}

async fn session_status(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<StatusResponse>, ApiError> {
    let now = app.now();
    let state = app.sessions().get(&id, now)?;
    let engine = app.engine();
    let live = state.status != SessionStatus::Cancelled;
    Ok(Json(StatusResponse {
        session_id: id,
        status: state.status,
        interaction: if live { Some(engine.current_interaction(&state)?) } else { None },
        progress: live.then(|| engine.progress(&state)),
    }))
}

async fn cancel_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<StatusResponse>, ApiError> {
    let now = app.now();
    app.sessions().cancel(&id, now)?;
    Ok(Json(StatusResponse {
        session_id: id,
        status: SessionStatus::Cancelled,
        interaction: None,
        progress: None,
    }))
}
