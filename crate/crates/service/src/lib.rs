//! HTTP interface to interactive multi-pass sessions.
//!
//! Routes live under `/v1`. Every session is persisted as a versioned JSON
//! snapshot in the state directory after creation and after each pass, and
//! the directory is reloaded at startup.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use feaslab::multipass::PassRecord;
use feaslab::session::{SessionRecord, SessionStatus};
use feaslab::{Error, Heuristic, OddsRatio, PassPlan, ProblemSpec, SourceConfig};

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { field, message } => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                code: "domain",
                message,
                field: Some(field),
            },
            Error::Plan(_) | Error::Config(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "domain", e.to_string()),
            Error::Session(_) => Self::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            Error::Json(_) => Self::new(StatusCode::BAD_REQUEST, "schema", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "schema", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A seed given as a JSON number or a decimal string.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum SeedInput {
    Number(u64),
    Text(#[serde(deserialize_with = "parse_seed")] u64),
}

fn parse_seed<'de, D: serde::Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl SeedInput {
    pub fn get(self) -> u64 {
        match self {
            SeedInput::Number(v) | SeedInput::Text(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Kept raw so odds-ratio range errors surface as 422 rather than 400.
    pub spec: serde_json::Value,
    pub source: SourceConfig,
    /// First-pass thresholds, one list per constraint.
    pub thresholds: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<SeedInput>,
    #[serde(default)]
    pub truth: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPass {
    #[serde(default)]
    pub pass_index: Option<u32>,
    #[serde(default)]
    pub thresholds: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub heuristic: Option<Heuristic>,
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub status: SessionStatus,
    pub passes: usize,
    pub updated_unix_ms: u64,
}

fn parse_spec(raw: serde_json::Value) -> ApiResult<ProblemSpec> {
    let thetas: Vec<&serde_json::Value> = match raw.get("theta") {
        Some(serde_json::Value::Array(items)) => items.iter().collect(),
        Some(v) => vec![v],
        None => Vec::new(),
    };
    for t in thetas {
        if let Some(x) = t.as_f64() {
            OddsRatio::new(x)?;
        }
    }
    serde_json::from_value(raw).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema", format!("spec: {e}")))
}

struct Slot {
    snapshot: RwLock<Arc<SessionRecord>>,
    writer: tokio::sync::Mutex<()>,
}

impl Slot {
    fn new(rec: SessionRecord) -> Self {
        Slot {
            snapshot: RwLock::new(Arc::new(rec)),
            writer: tokio::sync::Mutex::new(()),
        }
    }

    fn read(&self) -> Arc<SessionRecord> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, rec: SessionRecord) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(rec);
    }
}

/// Shared service state: the session table and its backing directory.
pub struct AppState {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    /// Open `dir`, creating it if needed, and load any saved sessions.
    pub fn open(dir: impl Into<PathBuf>) -> feaslab::Result<Arc<Self>> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let sessions = SessionRecord::load_dir(&dir)?
            .into_iter()
            .map(|rec| (rec.id.clone(), Arc::new(Slot::new(rec))))
            .collect::<HashMap<_, _>>();
        log::info!("loaded {} session(s) from {}", sessions.len(), dir.display());
        Ok(Arc::new(AppState {
            dir,
            sessions: RwLock::new(sessions),
        }))
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let v1 = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/passes", post(run_pass))
        .route("/sessions/{id}/passes/{w}", get(get_pass));
    Router::new().nest("/v1", v1).layer(CorsLayer::permissive()).with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionRecord>)> {
    let Json(body) = body?;
    let spec = parse_spec(body.spec)?;
    let seed = body.seed.map(SeedInput::get).unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0);
    let id = uuid::Uuid::new_v4().simple().to_string();
    let rec = SessionRecord::create(id.clone(), spec, body.source, PassPlan::new(1, body.thresholds), seed, body.truth)?;
    rec.save(&app.dir)?;
    app.sessions
        .write()
        .expect("session table")
        .insert(id, Arc::new(Slot::new(rec.clone())));
    Ok((StatusCode::CREATED, Json(rec)))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    let table = app.sessions.read().expect("session table");
    let mut out: Vec<SessionSummary> = table
        .values()
        .map(|slot| {
            let rec = slot.read();
            SessionSummary {
                id: rec.id.clone(),
                status: rec.status,
                passes: rec.state.history.len(),
                updated_unix_ms: rec.updated_unix_ms,
            }
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionRecord>> {
    Ok(Json((*app.slot(&id)?.read()).clone()))
}

async fn get_pass(
    State(app): State<Arc<AppState>>,
    Path((id, w)): Path<(String, usize)>,
) -> ApiResult<Json<PassRecord>> {
    let rec = app.slot(&id)?.read();
    w.checked_sub(1)
        .and_then(|i| rec.state.history.get(i))
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("session {id} has no pass {w}")))
}

async fn run_pass(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<RunPass>, JsonRejection>,
) -> ApiResult<Json<PassRecord>> {
    let Json(body) = body?;
    let slot = app.slot(&id)?;
    let _guard = slot
        .writer
        .try_lock()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "conflict", "a pass is already running"))?;

    let before = slot.read();
    let next = before.state.next_pass_index();
    let plan = match (body.thresholds, body.pass_index) {
        (Some(t), w) => Some(PassPlan::new(w.unwrap_or(next), t)),
        (None, Some(w)) if w != next => {
            let msg = format!("pass {w} requested but the next pass is {next}");
            return Err(ApiError::new(StatusCode::CONFLICT, "conflict", msg));
        }
        (None, _) => None,
    };

    let mut running = (*before).clone();
    running.status = SessionStatus::RunningPass;
    slot.publish(running);

    let mut work = (*before).clone();
    let heuristic = body.heuristic;
    let joined = tokio::task::spawn_blocking(move || {
        let out = work.run_next(plan, heuristic).map(|r| r.clone());
        (work, out)
    })
    .await;

    match joined {
        Ok((work, Ok(pass))) => {
            let dir = app.dir.clone();
            let saved = work.clone();
            let persisted = tokio::task::spawn_blocking(move || saved.save(&dir))
                .await
                .map_err(|e| Error::Fault(e.to_string()))
                .and_then(|r| r);
            match persisted {
                Ok(()) => {
                    slot.publish(work);
                    Ok(Json(pass))
                }
                Err(e) => {
                    slot.publish((*before).clone());
                    Err(e.into())
                }
            }
        }
        Ok((_, Err(e))) => {
            slot.publish((*before).clone());
            Err(e.into())
        }
        Err(e) => {
            slot.publish((*before).clone());
            Err(Error::Fault(format!("pass worker failed: {e}")).into())
        }
    }
}
