//! JSON HTTP API over a [`Service`].

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ragkit_core::generation::GenerationError;
use ragkit_core::pipeline::PipelineError;
use ragkit_core::retrieval::RetrievalError;
use ragkit_core::ticket::{TicketError, TicketStatus};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::service::Service;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

fn upstream(e: &GenerationError) -> ApiError {
    match e {
        GenerationError::Timeout(_) => ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "upstream_timeout",
            "the language model did not answer in time",
        ),
        _ => ApiError::new(
            StatusCode::BAD_GATEWAY,
            "upstream_error",
            "the language model request failed",
        ),
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        use StatusCode as S;
        match &e {
            Error::IndexNotReady => ApiError::new(S::SERVICE_UNAVAILABLE, "index_not_ready", e.to_string()),
            Error::Pipeline(PipelineError::EmptyQuestion) => ApiError::bad_request(e.to_string()),
            Error::Pipeline(PipelineError::Generation(g)) => {
                tracing::warn!(error = %g, "generation failed");
                upstream(g)
            }
            Error::Pipeline(PipelineError::Retrieval(
                RetrievalError::QueryEmbedding(_) | RetrievalError::EmbedderFailure { .. },
            )) => {
                tracing::warn!(error = %e, "embedding failed");
                ApiError::new(S::BAD_GATEWAY, "upstream_error", "the embedding request failed")
            }
            Error::Pipeline(PipelineError::Retrieval(RetrievalError::EmbedderMismatch { .. })) => ApiError::new(
                S::SERVICE_UNAVAILABLE,
                "index_stale",
                "the index was built with another embedder; reindex first",
            ),
            Error::Ticket(TicketError::IllegalTransition { .. }) => {
                ApiError::new(S::CONFLICT, "illegal_transition", e.to_string())
            }
            Error::Ticket(TicketError::UnknownTicket(_)) => ApiError::new(S::NOT_FOUND, "not_found", e.to_string()),
            Error::Ingest { .. } | Error::NoManifest | Error::Parse { .. } | Error::Config(_) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "reindex_failed", e.to_string())
            }
            Error::Storage(_) | Error::Io { .. } => {
                tracing::error!(error = %e, "storage failure");
                ApiError::new(
                    S::INTERNAL_SERVER_ERROR,
                    "storage_error",
                    "the server could not persist state",
                )
            }
            _ => {
                tracing::error!(error = %e, "request failed");
                ApiError::new(S::INTERNAL_SERVER_ERROR, "internal", "internal error")
            }
        }
    }
}

#[derive(Clone)]
struct AppState {
    service: Arc<Service>,
    token: Option<Arc<str>>,
}

pub fn router(service: Arc<Service>, token: Option<String>) -> Router {
    let state = AppState {
        service,
        token: token.filter(|t| !t.is_empty()).map(Into::into),
    };
    Router::new()
        .route("/api/query", post(query))
        .route("/api/feedback", post(file_ticket).get(list_tickets))
        .route("/api/feedback/{id}", get(get_ticket))
        .route("/api/feedback/{id}/transition", post(transition))
        .route("/api/reindex", post(reindex))
        .route("/api/config", get(config))
        .route("/api/health", get(health))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(&**token) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or invalid bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => {
            tracing::error!(error = %e, "worker panicked");
            Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                "internal error",
            ))
        }
    }
}

#[derive(Debug, Deserialize)]
struct QueryBody {
    question: String,
}

async fn query(
    State(s): State<AppState>,
    payload: Result<Json<QueryBody>, JsonRejection>,
) -> ApiResult<ragkit_core::pipeline::QueryResponse> {
    let q = body(payload)?;
    if q.question.trim().is_empty() {
        return Err(ApiError::bad_request("question is empty"));
    }
    blocking(move || s.service.answer(&q.question)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct FeedbackBody {
    question: String,
    answer_given: String,
    #[serde(default)]
    reporter: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FiledTicket {
    pub ticket_id: String,
    pub status: TicketStatus,
}

async fn file_ticket(
    State(s): State<AppState>,
    payload: Result<Json<FeedbackBody>, JsonRejection>,
) -> Result<(StatusCode, Json<FiledTicket>), ApiError> {
    let f = body(payload)?;
    if f.question.trim().is_empty() {
        return Err(ApiError::bad_request("question is empty"));
    }
    let t = blocking(move || s.service.file_ticket(&f.question, &f.answer_given, &f.reporter)).await?;
    Ok((
        StatusCode::CREATED,
        Json(FiledTicket {
            ticket_id: t.ticket_id,
            status: t.status,
        }),
    ))
}

#[derive(Debug, Deserialize)]
struct ListParams {
    status: Option<String>,
}

async fn list_tickets(
    State(s): State<AppState>,
    params: Result<Query<ListParams>, QueryRejection>,
) -> ApiResult<Vec<ragkit_core::ticket::FeedbackTicket>> {
    let Query(p) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let status = match p.status.as_deref() {
        None | Some("") => None,
        Some(name) => Some(
            TicketStatus::from_name(name).ok_or_else(|| ApiError::bad_request(format!("unknown status {name:?}")))?,
        ),
    };
    Ok(Json(s.service.tickets(status)))
}

async fn get_ticket(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<ragkit_core::ticket::FeedbackTicket> {
    s.service
        .tickets(None)
        .into_iter()
        .find(|t| t.ticket_id == id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown ticket {id:?}")))
}

#[derive(Debug, Deserialize)]
struct TransitionBody {
    to: TicketStatus,
    #[serde(default)]
    note: String,
    #[serde(default)]
    author: String,
}

async fn transition(
    State(s): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<TransitionBody>, JsonRejection>,
) -> ApiResult<ragkit_core::ticket::FeedbackTicket> {
    let t = body(payload)?;
    blocking(move || s.service.transition_ticket(&id, t.to, &t.author, &t.note))
        .await
        .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReindexResponse {
    pub new_config_version: String,
    pub generation: u64,
    pub chunk_count: usize,
}

async fn reindex(State(s): State<AppState>) -> ApiResult<ReindexResponse> {
    let out = blocking(move || s.service.reindex()).await?;
    Ok(Json(ReindexResponse {
        new_config_version: out.config_version,
        generation: out.generation,
        chunk_count: out.chunk_count,
    }))
}

async fn config(State(s): State<AppState>) -> ApiResult<ragkit_core::config::PipelineConfig> {
    s.service.config().map(Json).map_err(ApiError::from)
}

async fn health(State(s): State<AppState>) -> Json<crate::service::Health> {
    Json(s.service.health())
}
