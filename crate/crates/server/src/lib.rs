//! HTTP wire protocol for the annotation service.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"annotator_id","sample_ids","k"?}` | session |
//! | GET | `/sessions/{id}` | | session |
//! | GET | `/sessions/{id}/view` | | view |
//! | POST | `/sessions/{id}/expand` | | view |
//! | POST | `/sessions/{id}/entity-types` | | view |
//! | POST | `/sessions/{id}/submit` | `{"label"}` | record |
//! | GET | `/annotations/export?annotator=` | | `{"records":[...]}` |
//!
//! Errors are `{"code","message"}` objects.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use extentlab_core::annotation::{
    AnnotationError, AnnotationRecord, AnnotationService, AnnotationSession, SessionView,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match &e {
            AnnotationError::UnknownSample(_) | AnnotationError::UnknownSession(_) => StatusCode::NOT_FOUND,
            AnnotationError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            AnnotationError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotationError::Exhausted(_) | AnnotationError::Conflict { .. } => StatusCode::CONFLICT,
            AnnotationError::Classifier(_) | AnnotationError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSession {
    pub annotator_id: String,
    pub sample_ids: Vec<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Submit {
    pub label: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExportQuery {
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBody {
    pub records: Vec<AnnotationRecord>,
}

type AppState = Arc<AnnotationService>;

async fn start_session(
    State(svc): State<AppState>,
    body: Result<Json<StartSession>, JsonRejection>,
) -> Result<(StatusCode, Json<AnnotationSession>), ApiError> {
    let Json(req) = body?;
    let k = req.k.unwrap_or(DEFAULT_K);
    let session = blocking(move || svc.start_session(&req.annotator_id, &req.sample_ids, k)).await?;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn session_state(State(svc): State<AppState>, Path(id): Path<String>) -> ApiResult<AnnotationSession> {
    Ok(Json(svc.session_state(&id)?))
}

async fn view(State(svc): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionView> {
    Ok(Json(svc.get_view(&id)?))
}

async fn expand(State(svc): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionView> {
    Ok(Json(blocking(move || svc.expand(&id)).await?))
}

async fn entity_types(State(svc): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionView> {
    Ok(Json(blocking(move || svc.reveal_entity_types(&id)).await?))
}

async fn submit(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Submit>, JsonRejection>,
) -> ApiResult<AnnotationRecord> {
    let Json(req) = body?;
    Ok(Json(blocking(move || svc.submit(&id, &req.label)).await?))
}

async fn export(State(svc): State<AppState>, Query(q): Query<ExportQuery>) -> ApiResult<ExportBody> {
    Ok(Json(ExportBody {
        records: svc.export(q.annotator.as_deref()),
    }))
}

/// Runs file-touching service calls off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, AnnotationError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(service: Arc<AnnotationService>) -> Router {
    Router::new()
        .route("/sessions", post(start_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/expand", post(expand))
        .route("/sessions/{id}/entity-types", post(entity_types))
        .route("/sessions/{id}/submit", post(submit))
        .route("/annotations/export", get(export))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(service)
}

/// Serves until Ctrl-C.
pub async fn serve(service: Arc<AnnotationService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
