//! HTTP routes. Every error body is `{code, message}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock, TryLockError};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use pursuit_core::{AgentKind, Dir};

use crate::engine::Engines;
use crate::session::{LogRecord, Session, SessionError};
use crate::store::LogStore;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn bad_body(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::Finished => (StatusCode::CONFLICT, "session_finished"),
            SessionError::Terminal => (StatusCode::CONFLICT, "episode_terminal"),
            SessionError::IllegalMove(..) => (StatusCode::UNPROCESSABLE_ENTITY, "illegal_move"),
            SessionError::InvalidSurvey => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_survey"),
            SessionError::DuplicateSurvey => (StatusCode::CONFLICT, "duplicate_survey"),
            SessionError::NoCompletedSet => (StatusCode::CONFLICT, "no_completed_set"),
            SessionError::UnknownTask(_) | SessionError::Replay(_) | SessionError::Plan(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"code": self.code, "message": self.message})),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub struct AppState {
    pub engines: Arc<Engines>,
    pub store: LogStore,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(engines: Arc<Engines>, store: LogStore) -> Self {
        AppState {
            engines,
            store,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Reloads every indexed session by replaying its log. Returns how many
    /// were restored.
    pub fn recover(&self) -> Result<usize, String> {
        let index = self.store.index().map_err(|e| e.to_string())?;
        let mut sessions = self.sessions.write().unwrap();
        for entry in &index {
            let records = self.store.read(&entry.session_id).map_err(|e| e.to_string())?;
            let s = Session::recover(&self.engines, &records)
                .map_err(|e| format!("session {}: {e}", entry.session_id))?;
            sessions.insert(entry.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(index.len())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    /// Runs `f` on a copy of the session, persists the records it returns,
    /// then commits the copy. A concurrent request on the same session gets
    /// 409 instead of waiting.
    fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<(T, Vec<LogRecord>), SessionError>,
    ) -> Result<T, ApiError> {
        let cell = self.session(id)?;
        let mut guard = match cell.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "busy",
                    "another request on this session is in progress",
                ))
            }
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let mut draft = guard.clone();
        let (out, records) = f(&mut draft)?;
        self.store.append(id, &records).map_err(ApiError::internal)?;
        *guard = draft;
        Ok(out)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tasks", get(list_tasks))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/action", post(submit_action))
        .route("/sessions/{id}/survey", post(submit_survey))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(state)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(ApiError::bad_body)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TaskInfo {
    id: String,
    name: String,
    task_type: String,
    rows: u16,
    cols: u16,
    horizon: u32,
    evaders: Vec<u8>,
    has_agent: bool,
    content_hash: String,
}

async fn list_tasks(State(app): State<Arc<AppState>>) -> Json<Vec<TaskInfo>> {
    Json(
        app.engines
            .all()
            .iter()
            .map(|e| {
                let t = e.task();
                TaskInfo {
                    id: e.id().to_string(),
                    name: t.name.clone(),
                    task_type: t.task_type.to_string(),
                    rows: t.grid.rows(),
                    cols: t.grid.cols(),
                    horizon: t.horizon,
                    evaders: t.theta_space().iter().map(|x| x.0).collect(),
                    has_agent: t.agent_start.is_some(),
                    content_hash: t.content_hash(),
                }
            })
            .collect(),
    )
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateSession {
    /// Seeds the task order; random when absent.
    seed: Option<u64>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<crate::session::StateView>), ApiError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        parse_body(&body)?
    };
    let seed = req.seed.unwrap_or_else(rand::random);
    let id = format!("{:032x}", rand::random::<u128>());
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let (session, records) = Session::create(&app.engines, id.clone(), seed, now);
    app.store.append(&id, &records).map_err(ApiError::internal)?;
    app.store.register(&id, now).map_err(ApiError::internal)?;
    let view = session.view(&app.engines);
    app.sessions
        .write()
        .unwrap()
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_state(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<crate::session::StateView> {
    let cell = app.session(&id)?;
    let s = cell.lock().unwrap_or_else(|p| p.into_inner());
    Ok(Json(s.view(&app.engines)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionRequest {
    direction: String,
}

async fn submit_action(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::session::StepResult> {
    app.session(&id)?;
    let req: ActionRequest = parse_body(&body)?;
    let dir = Dir::parse(&req.direction).ok_or_else(|| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_direction",
            format!("unknown direction {:?}", req.direction),
        )
    })?;
    let engines = app.engines.clone();
    app.mutate(&id, |s| s.apply_move(&engines, dir)).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurveyRequest {
    items: Vec<i64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SurveyAck {
    session_id: String,
    set: usize,
    items: [u8; 4],
}

async fn submit_survey(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<SurveyAck> {
    app.session(&id)?;
    let req: SurveyRequest = parse_body(&body)?;
    let rec = app.mutate(&id, |s| s.submit_survey(&req.items))?;
    Ok(Json(SurveyAck {
        session_id: id,
        set: rec.set,
        items: rec.items,
    }))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LogExport {
    session_id: String,
    records: Vec<LogRecord>,
}

async fn get_log(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<LogExport> {
    let cell = app.session(&id)?;
    // hold the session so no record is half-way through being appended
    let _guard = cell.lock().unwrap_or_else(|p| p.into_inner());
    let records = app.store.read(&id).map_err(ApiError::internal)?;
    Ok(Json(LogExport {
        session_id: id,
        records,
    }))
}

/// The agent type label is withheld from players; this is for operators
/// and tests only.
pub fn queue_agent_types(app: &AppState, id: &str) -> Option<Vec<AgentKind>> {
    let cell = app.sessions.read().unwrap().get(id).cloned()?;
    let s = cell.lock().unwrap_or_else(|p| p.into_inner());
    Some(s.queue.iter().map(|e| e.agent_type).collect())
}
