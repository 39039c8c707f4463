//! JSON-over-HTTP API for catalogs, live scoring, reports and sessions.
//!
//! Every error leaves the service as an [`ApiError`] body with a stable
//! machine code. Store operations run on the blocking pool; writes to one
//! session are serialized by the store itself.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use readiness_core::report::report_json_value;
use readiness_core::scoring::{display, validate_raw_scores};
use readiness_core::session::{format_timestamp, Timestamp};
use readiness_core::{
    histogram, load_catalog, rollup, Assessment, Catalog, CatalogError, LeafScore, Mode, NodeKind,
    ReportError, ReportOptions, ScoreReport, ScoringError, SessionStore, StoreError,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub store_dir: PathBuf,
    /// Catalog document to serve; the bundled catalog when absent.
    pub catalog_path: Option<PathBuf>,
    /// Origin allowed by CORS; any origin when absent.
    pub ui_origin: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot read catalog {path}: {source}")]
    CatalogRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("catalog {path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error("session store: {0}")]
    Store(#[from] StoreError),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub store: Arc<SessionStore>,
    pub clock: Clock,
    pub report_options: ReportOptions,
}

impl AppState {
    pub fn new(catalog: Catalog, store: SessionStore) -> Self {
        AppState {
            catalog: Arc::new(catalog),
            store: Arc::new(store),
            clock: Arc::new(Utc::now),
            report_options: ReportOptions::default(),
        }
    }

    fn now(&self) -> Timestamp {
        (self.clock)()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    ValidationFailed,
    Conflict,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::ValidationFailed => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            details: None,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    fn internal() -> Self {
        ApiError::new(ErrorCode::Internal, "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "http_status": self.code.status().as_u16(),
            "code": self.code,
            "message": self.message,
            "details": self.details,
        });
        (self.code.status(), Json(body)).into_response()
    }
}

impl From<ScoringError> for ApiError {
    fn from(err: ScoringError) -> Self {
        let message = err.to_string();
        match err {
            ScoringError::UnknownLeaves(ids) => ApiError::new(ErrorCode::ValidationFailed, message)
                .with_details(json!({ "unknown_leaves": ids })),
            ScoringError::Incomplete(ids) => ApiError::new(ErrorCode::ValidationFailed, message)
                .with_details(json!({ "unscored_leaves": ids })),
            ScoringError::CatalogMismatch { .. } => ApiError::new(ErrorCode::Conflict, message),
            ScoringError::EmptyMean | ScoringError::OutOfRange(_) => {
                ApiError::new(ErrorCode::ValidationFailed, message)
            }
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Scoring(e) => e.into(),
            StoreError::UnknownSession(_) => ApiError::new(ErrorCode::NotFound, err.to_string()),
            StoreError::EmptyUser | StoreError::ClockInversion { .. } => {
                ApiError::new(ErrorCode::ValidationFailed, err.to_string())
            }
            StoreError::CatalogMismatch { .. } | StoreError::EmptyDraft => {
                ApiError::new(ErrorCode::Conflict, err.to_string())
            }
            StoreError::Io(_) | StoreError::Corrupt { .. } | StoreError::Rederivation { .. } => {
                tracing::error!(error = %err, "store failure");
                ApiError::internal()
            }
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(err: ReportError) -> Self {
        match err {
            ReportError::UnsupportedLevel(_) => {
                ApiError::new(ErrorCode::BadRequest, err.to_string())
            }
            ReportError::CatalogMismatch { .. } => {
                ApiError::new(ErrorCode::Conflict, err.to_string())
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore, &Catalog) -> Result<T, StoreError> + Send + 'static,
{
    let store = state.store.clone();
    let catalog = state.catalog.clone();
    tokio::task::spawn_blocking(move || f(&store, &catalog))
        .await
        .map_err(|e| {
            tracing::error!(error = %e, "blocking task failed");
            ApiError::internal()
        })?
        .map_err(ApiError::from)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid JSON body: {e}")))
}

/// Partial-mode rollup of draft scores; nothing is persisted.
pub fn live_rescore(
    catalog: &Catalog,
    scores: &BTreeMap<String, LeafScore>,
) -> Result<ScoreReport, ScoringError> {
    let assessment = Assessment {
        catalog: catalog.catalog_ref(),
        scores: scores.clone(),
    };
    rollup(catalog, &assessment, Mode::Partial)
}

fn report_body(state: &AppState, report: &ScoreReport) -> ApiResult<Json<Value>> {
    Ok(Json(report_json_value(
        report,
        &state.catalog,
        &state.report_options,
    )?))
}

pub fn router(state: AppState, ui_origin: Option<&str>) -> Result<Router, ServiceError> {
    let origin = match ui_origin {
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.to_string()))?,
        ),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);

    Ok(Router::new()
        .route("/api/catalog", get(get_catalog))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/scores", put(put_scores))
        .route("/api/sessions/{id}/scores/{leaf_id}", delete(delete_score))
        .route("/api/sessions/{id}/finish", post(finish))
        .route("/api/sessions/{id}/report", get(get_report))
        .route("/api/sessions/{id}/progression", get(get_progression))
        .route("/api/sessions/{id}/histogram", get(get_histogram))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .layer(cors)
        .with_state(state))
}

async fn get_catalog(State(state): State<AppState>) -> Json<Catalog> {
    Json((*state.catalog).clone())
}

#[derive(Deserialize)]
struct CreateSession {
    user: Option<String>,
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let from_body = if body.is_empty() {
        None
    } else {
        parse_body::<CreateSession>(&body)?.user
    };
    let from_header = headers
        .get("x-assessor")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let user = from_body.or(from_header).unwrap_or_default();
    let now = state.now();
    let session = blocking(&state, move |store, catalog| {
        store.create_session(&user, catalog.catalog_ref(), now)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::to_value(session).expect("session serializes")),
    ))
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let list = blocking(&state, |store, _| store.list()).await?;
    Ok(Json(serde_json::to_value(list).expect("list serializes")))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = blocking(&state, move |store, _| store.load(&id)).await?;
    Ok(Json(
        serde_json::to_value(session).expect("session serializes"),
    ))
}

/// Parses a `{leaf_id: score}` body, rejecting non-integers and out-of-range values by id.
fn parse_scores(body: &Bytes) -> ApiResult<BTreeMap<String, LeafScore>> {
    let raw: BTreeMap<String, Value> = parse_body(body)?;
    let mut ints = BTreeMap::new();
    let mut invalid = Vec::new();
    for (id, v) in raw {
        match v.as_i64() {
            Some(i) => {
                ints.insert(id, i);
            }
            None => invalid.push(json!({ "leaf_id": id, "value": v })),
        }
    }
    let (scores, bad) = validate_raw_scores(ints);
    invalid.extend(
        bad.into_iter()
            .map(|(id, v)| json!({ "leaf_id": id, "value": v })),
    );
    if !invalid.is_empty() {
        return Err(ApiError::new(
            ErrorCode::ValidationFailed,
            "scores must be integers from 0 to 4",
        )
        .with_details(json!({ "invalid_scores": invalid })));
    }
    Ok(scores)
}

async fn put_scores(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let scores = parse_scores(&body)?;
    let now = state.now();
    let draft = blocking(&state, move |store, catalog| {
        store.put_draft_scores(&id, catalog, &scores, now)
    })
    .await?;
    let report = live_rescore(&state.catalog, &draft.scores)?;
    report_body(&state, &report)
}

async fn delete_score(
    State(state): State<AppState>,
    Path((id, leaf_id)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let now = state.now();
    let draft = blocking(&state, move |store, catalog| {
        store.delete_draft_score(&id, catalog, &leaf_id, now)
    })
    .await?;
    let scores = draft.map(|d| d.scores).unwrap_or_default();
    let report = live_rescore(&state.catalog, &scores)?;
    report_body(&state, &report)
}

#[derive(Deserialize, Default)]
struct FinishRequest {
    #[serde(default)]
    partial: bool,
}

async fn finish(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: FinishRequest = if body.is_empty() {
        FinishRequest::default()
    } else {
        parse_body::<Option<FinishRequest>>(&body)?.unwrap_or_default()
    };
    let mode = if req.partial {
        Mode::Partial
    } else {
        Mode::Strict
    };
    let now = state.now();
    let experiment = blocking(&state, move |store, catalog| {
        store.finish_draft(&id, catalog, now, mode)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::to_value(experiment).expect("experiment serializes")),
    ))
}

#[derive(Deserialize)]
struct ReportQuery {
    mode: Option<String>,
    experiment: Option<u32>,
    level: Option<String>,
}

/// The live draft report, or the stored result of experiment `n`.
async fn select_report(
    state: &AppState,
    id: String,
    query: &ReportQuery,
) -> ApiResult<ScoreReport> {
    if let Some(mode) = query.mode.as_deref() {
        if mode != "live" {
            return Err(ApiError::new(
                ErrorCode::BadRequest,
                format!("unknown report mode `{mode}`; use mode=live or experiment=<n>"),
            ));
        }
        if query.experiment.is_some() {
            return Err(ApiError::new(
                ErrorCode::BadRequest,
                "mode=live and experiment are exclusive",
            ));
        }
    }
    let session = blocking(state, move |store, _| store.load(&id)).await?;
    match query.experiment {
        Some(n) => session
            .experiments
            .into_iter()
            .find(|e| e.index == n)
            .map(|e| e.result)
            .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("no experiment {n}"))),
        None => {
            let scores = session.draft.map(|d| d.scores).unwrap_or_default();
            Ok(live_rescore(&state.catalog, &scores)?)
        }
    }
}

fn query_or_400(q: Result<Query<ReportQuery>, QueryRejection>) -> ApiResult<ReportQuery> {
    q.map(|Query(q)| q)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let query = query_or_400(query)?;
    let report = select_report(&state, id, &query).await?;
    report_body(&state, &report)
}

async fn get_histogram(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let query = query_or_400(query)?;
    let level: NodeKind = query.level.as_deref().unwrap_or("domain").parse().map_err(
        |e: readiness_core::catalog::ParseKindError| {
            ApiError::new(ErrorCode::BadRequest, e.to_string())
        },
    )?;
    let report = select_report(&state, id, &query).await?;
    let series = histogram(&report, &state.catalog, level)?;
    Ok(Json(
        serde_json::to_value(series).expect("series serializes"),
    ))
}

async fn get_progression(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let rows = blocking(&state, move |store, _| store.progression(&id)).await?;
    let body: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "index": r.index,
                "finished_at": format_timestamp(&r.finished_at),
                "achievement": display(&r.achievement),
                "achievement_exact": { "num": r.achievement.numer().to_string(), "den": r.achievement.denom().to_string() },
                "delta": r.delta.as_ref().map(display),
                "delta_exact": r.delta.as_ref().map(|d| json!({ "num": d.numer().to_string(), "den": d.denom().to_string() })),
            })
        })
        .collect();
    Ok(Json(Value::Array(body)))
}

/// Loads the configured catalog and store and builds the application state.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let catalog = match &config.catalog_path {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|source| ServiceError::CatalogRead {
                    path: path.clone(),
                    source,
                })?;
            load_catalog(&text).map_err(|source| ServiceError::Catalog {
                path: path.clone(),
                source,
            })?
        }
        None => Catalog::bundled(),
    };
    let store = SessionStore::open(&config.store_dir)?;
    Ok(AppState::new(catalog, store))
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = build_state(&config)?;
    let app = router(state, config.ui_origin.as_deref())?;
    let listener = TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.bind,
            source,
        })?;
    let local = listener.local_addr().map_err(ServiceError::Serve)?;
    tracing::info!(%local, store = %config.store_dir.display(), "serving readiness API");
    serve_on(listener, app, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    })
    .await
}
