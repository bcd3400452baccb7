use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use linkpilot::eval::ErrorType;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{AdjudicationInput, ErrorFilter, ReviewError, ReviewStore, StatusFilter};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ReviewError::UnknownRun(_) => (StatusCode::NOT_FOUND, "unknown_run"),
            ReviewError::UnknownError(_) => (StatusCode::NOT_FOUND, "unknown_error"),
            ReviewError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            ReviewError::Load { .. } | ReviewError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({"error": {"code": code, "message": self.to_string()}}))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct ErrorQuery {
    #[serde(rename = "type")]
    error_type: Option<String>,
    status: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

fn parse_filter(q: &ErrorQuery) -> Result<ErrorFilter, ReviewError> {
    let error_type = match q.error_type.as_deref().filter(|s| !s.is_empty()) {
        Some(t) => Some(t.parse::<ErrorType>().map_err(ReviewError::Invalid)?),
        None => None,
    };
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) if s.eq_ignore_ascii_case("adjudicated") => Some(StatusFilter::Adjudicated),
        Some(s) if s.eq_ignore_ascii_case("unadjudicated") => Some(StatusFilter::Unadjudicated),
        Some(s) => return Err(ReviewError::Invalid(format!("unknown status {s:?}"))),
        None => None,
    };
    Ok(ErrorFilter { error_type, status })
}

type Shared = Arc<ReviewStore>;

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn runs(State(s): State<Shared>) -> impl IntoResponse {
    Json(json!({"runs": s.runs()}))
}

async fn metrics(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ReviewError> {
    Ok(Json(s.metrics(&id)?))
}

async fn revised(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ReviewError> {
    Ok(Json(s.revised_metrics(&id)?))
}

async fn errors(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ErrorQuery>,
) -> Result<impl IntoResponse, ReviewError> {
    let filter = parse_filter(&q)?;
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE).min(MAX_PAGE_SIZE);
    Ok(Json(s.list_errors(&id, filter, q.page.unwrap_or(0), page_size)?))
}

async fn error_detail(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ReviewError> {
    Ok(Json(s.error_detail(&id)?))
}

async fn adjudicate(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AdjudicationInput>, axum::extract::rejection::JsonRejection>,
) -> Result<impl IntoResponse, ReviewError> {
    let Json(input) = body.map_err(|e| ReviewError::Invalid(e.body_text()))?;
    // File appends are short; run them off the async workers anyway.
    let adj = tokio::task::spawn_blocking(move || s.record_adjudication(&id, input))
        .await
        .map_err(|e| ReviewError::Invalid(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(adj)))
}

/// All API routes, plus the UI bundle under `/` when `static_dir` is given.
pub fn router(store: Arc<ReviewStore>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/runs", get(runs))
        .route("/runs/{id}/metrics", get(metrics))
        .route("/runs/{id}/revised-metrics", get(revised))
        .route("/runs/{id}/errors", get(errors))
        .route("/errors/{id}", get(error_detail))
        .route("/errors/{id}/adjudication", post(adjudicate))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind and serve until Ctrl-C.
pub async fn serve(store: ReviewStore, addr: &str, static_dir: Option<&Path>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store), static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
