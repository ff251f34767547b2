//! HTTP/JSON design-session service.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use typeforge::design::{
    whatif_axis, whatif_learnability_config, DesignError, DesignSettings, DesignWorld, ErrorPage, EvaluationCache,
    EvaluationResponse, RelationInfo, WhatIfResponse, WorldSource,
};
use typeforge::typesys::{Relation, SystemError, TypeSystem};

pub const DEFAULT_RELATION_ROOTS: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            path: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }

    fn bad_json(message: impl Into<String>) -> Self {
        Self {
            path: Some("$".into()),
            ..Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
        }
    }
}

impl From<SystemError> for ApiError {
    fn from(e: SystemError) -> Self {
        let (status, code) = match &e {
            SystemError::Parse { .. } => (StatusCode::BAD_REQUEST, "parse_error"),
            SystemError::UnknownRoot(_) | SystemError::UnknownEntity(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "unknown_entity")
            }
            _ => (StatusCode::BAD_REQUEST, "invalid_system"),
        };
        Self {
            path: e.path().map(String::from),
            ..Self::new(status, code, e.to_string())
        }
    }
}

impl From<DesignError> for ApiError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::System(s) => s.into(),
            DesignError::Load { ref path, .. } => Self {
                path: Some(path.display().to_string()),
                ..Self::new(StatusCode::BAD_REQUEST, "load_error", e.to_string())
            },
            other => Self::new(StatusCode::BAD_REQUEST, "invalid_request", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message, "path": self.path}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct Session {
    pub id: String,
    pub source: WorldSource,
    pub world: DesignWorld,
    pub settings: DesignSettings,
    rules: RwLock<(u64, Arc<TypeSystem>)>,
    cache: EvaluationCache,
}

impl Session {
    pub fn version(&self) -> u64 {
        self.rules.read().0
    }

    pub fn system(&self) -> (u64, Arc<TypeSystem>) {
        let r = self.rules.read();
        (r.0, r.1.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub relation_roots: usize,
    /// Directory for saved type systems; snapshots are disabled without it.
    pub snapshot_dir: Option<PathBuf>,
}

#[derive(Default)]
pub struct AppState {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/rules", put(put_rules))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/sessions/{id}/relations", get(relations))
        .route("/sessions/{id}/errors", get(errors))
        .route("/sessions/{id}/snapshot", post(save_snapshot))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> ApiResult<T> {
    serde_json::from_str(body).map_err(|e| ApiError::bad_json(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    world: WorldSource,
    #[serde(default)]
    settings: DesignSettings,
    /// Initial authored system, inline.
    system: Option<Value>,
    /// Initial authored system, from a JSON file.
    system_path: Option<PathBuf>,
}

#[derive(Serialize)]
struct SessionCreated {
    id: String,
    version: u64,
    entities: usize,
    mentions: usize,
    relations: usize,
}

async fn create_session(State(state): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: CreateSession = parse_body(&body)?;
    req.settings.validate()?;
    let system = match (&req.system, &req.system_path) {
        (Some(v), _) => TypeSystem::from_json(v)?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| ApiError {
                path: Some(p.display().to_string()),
                ..ApiError::new(StatusCode::BAD_REQUEST, "load_error", format!("{}: {e}", p.display()))
            })?;
            TypeSystem::from_json_str(&text)?
        }
        (None, None) => TypeSystem::empty(),
    };
    let roots = state.config.relation_roots;
    let source = req.world.clone();
    let world = tokio::task::spawn_blocking(move || DesignWorld::load(&source, roots))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    system.check_roots(&world.graph)?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let created = SessionCreated {
        id: id.clone(),
        version: 0,
        entities: world.graph.len(),
        mentions: world.mentions.len(),
        relations: world.relations.len(),
    };
    let session = Session {
        id: id.clone(),
        source: req.world,
        world,
        settings: req.settings,
        rules: RwLock::new((0, Arc::new(system))),
        cache: EvaluationCache::default(),
    };
    state.sessions.write().insert(id, Arc::new(session));
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Serialize)]
struct Versioned<T> {
    version: u64,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct SessionView {
    id: String,
    world: WorldSource,
    settings: DesignSettings,
    system: Value,
    evaluation: EvaluationResponse,
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Versioned<SessionView>>> {
    let s = state.session(&id)?;
    let (version, system) = s.system();
    let eval = s.cache.get_or_eval(&s.world, &system, &s.settings)?;
    Ok(Json(Versioned {
        version,
        body: SessionView {
            id: s.id.clone(),
            world: s.source.clone(),
            settings: s.settings,
            system: system.to_json(),
            evaluation: eval.response.clone(),
        },
    }))
}

async fn put_rules(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<Versioned<EvaluationResponse>>> {
    let s = state.session(&id)?;
    let system = TypeSystem::from_json_str(&body)?;
    let eval = s.cache.get_or_eval(&s.world, &system, &s.settings)?;
    let version = {
        let mut rules = s.rules.write();
        rules.0 += 1;
        rules.1 = Arc::new(system);
        rules.0
    };
    Ok(Json(Versioned {
        version,
        body: eval.response.clone(),
    }))
}

async fn whatif(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<Versioned<WhatIfResponse>>> {
    let s = state.session(&id)?;
    let value: Value = parse_body(&body)?;
    let relation = Relation::from_json(&value, "$")?;
    let (version, system) = s.system();
    let res = tokio::task::spawn_blocking(move || {
        whatif_axis(&s.world, &system, &relation, &s.settings, &whatif_learnability_config())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(Versioned { version, body: res }))
}

#[derive(Deserialize)]
struct RelationQuery {
    #[serde(default)]
    query: String,
    limit: Option<usize>,
}

#[derive(Serialize)]
struct RelationList {
    total: usize,
    relations: Vec<RelationInfo>,
}

async fn relations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RelationQuery>,
) -> ApiResult<Json<RelationList>> {
    let s = state.session(&id)?;
    let all = s.world.search_relations(&q.query, usize::MAX);
    Ok(Json(RelationList {
        total: all.len(),
        relations: all.into_iter().take(q.limit.unwrap_or(50)).cloned().collect(),
    }))
}

#[derive(Deserialize)]
struct ErrorQuery {
    group: Option<String>,
    #[serde(default)]
    page: usize,
}

async fn errors(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ErrorQuery>,
) -> ApiResult<Json<Versioned<ErrorPage>>> {
    let s = state.session(&id)?;
    let (version, system) = s.system();
    let eval = s.cache.get_or_eval(&s.world, &system, &s.settings)?;
    let group = q.group.as_deref().filter(|g| !g.is_empty());
    Ok(Json(Versioned {
        version,
        body: eval.error_page(q.page, group),
    }))
}

async fn save_snapshot(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = state.session(&id)?;
    let dir = state.config.snapshot_dir.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "snapshots_disabled", "service runs without a snapshot directory")
    })?;
    let (version, system) = s.system();
    let path = dir.join(format!("{}-v{version}.json", s.id));
    std::fs::write(&path, system.to_json_string()).map_err(|e| ApiError {
        path: Some(path.display().to_string()),
        ..ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", e.to_string())
    })?;
    Ok(Json(json!({"version": version, "path": path})))
}

pub async fn serve(addr: &str, config: ServiceConfig) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(AppState::new(config))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
