//! HTTP/JSON routes.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefbench_core::dataset::dataset_to_string;
use serde::Deserialize;
use serde_json::json;
use uuid::Uuid;

use crate::condition::Condition;
use crate::error::ServiceError;
use crate::service::{CreateSession, Service};
use crate::session::ResponseInput;
use crate::survey::SurveyAnswers;

pub const JSONL: &str = "application/x-ndjson";

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use ServiceError::*;
        match self {
            UnknownSession(_) | NoKeptSessions(_) => StatusCode::NOT_FOUND,
            Unauthorized => StatusCode::UNAUTHORIZED,
            ConditionDisabled(_) => StatusCode::FORBIDDEN,
            SessionDone | OutOfOrder { .. } | Duplicate(_) | WrongStage(_) | NotReplaceable(..) => StatusCode::CONFLICT,
            PoolExhausted(_) => StatusCode::SERVICE_UNAVAILABLE,
            UnknownCondition(_) | InvalidResponse(_) | UnknownQuestion(_) => StatusCode::BAD_REQUEST,
            Config(_) | Content(_) | Store(_) | Dataset(_) | Preference(_) | Plan(_) | Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type AppState = Arc<Service>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ")
}

fn session_id(raw: &str) -> Result<Uuid, ServiceError> {
    raw.parse().map_err(|_| ServiceError::UnknownSession(raw.to_string()))
}

/// Rejections from axum's extractors, reported in the service's error shape.
fn json_body<T>(body: Result<Json<T>, axum::extract::rejection::JsonRejection>) -> Result<T, ServiceError> {
    body.map(|Json(v)| v).map_err(|e| ServiceError::InvalidResponse(e.body_text()))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(svc): State<AppState>,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let created = svc.create_session(json_body(body)?)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn next_item(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(svc.next_item(&session_id(&id)?, bearer(&headers))?))
}

async fn submit_response(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<ResponseInput>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let id = session_id(&id)?;
    Ok(Json(svc.submit_response(&id, bearer(&headers), json_body(body)?)?))
}

async fn submit_survey(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<SurveyAnswers>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let id = session_id(&id)?;
    Ok(Json(svc.submit_survey(&id, bearer(&headers), json_body(body)?)?))
}

async fn filter(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ServiceError> {
    let id = session_id(&id)?;
    // Same authorization as the other per-session routes.
    svc.next_item(&id, bearer(&headers))?;
    Ok(Json(svc.attention_filter(&id)?))
}

#[derive(Deserialize)]
struct ExportQuery {
    include_same: Option<bool>,
}

fn jsonl(text: String) -> Response {
    ([(header::CONTENT_TYPE, JSONL)], text).into_response()
}

async fn export(
    State(svc): State<AppState>,
    Path(c): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ServiceError> {
    let c: Condition = c.parse()?;
    let d = svc.export(c, q.include_same.unwrap_or(svc.config().include_same))?;
    Ok(jsonl(dataset_to_string(&d)))
}

async fn export_sidecar(State(svc): State<AppState>, Path(c): Path<String>) -> Result<Response, ServiceError> {
    let c: Condition = c.parse()?;
    Ok(jsonl(dataset_to_string(&svc.export_sidecar(c)?)))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/responses", post(submit_response))
        .route("/sessions/{id}/survey", post(submit_survey))
        .route("/sessions/{id}/filter", get(filter))
        .route("/conditions/{c}/export", get(export))
        .route("/conditions/{c}/export/sidecar", get(export_sidecar))
        .with_state(service)
}

/// Binds `cfg.bind` and serves until the process is stopped.
pub async fn serve(service: Arc<Service>) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(&service.config().bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "elicitation service listening");
    axum::serve(listener, router(service)).await?;
    Ok(())
}
