//! Triage service: queues screened articles for human review and records
//! reviewer decisions, exposed over a JSON HTTP API under `/v1`.

pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

pub use store::{
    ArticleDetail, BatchSummary, Clock, DecisionAck, DecisionRequest, FixedClock, QueueFilter, QueuePage, QueueStats,
    ReviewDecision, ServiceConfig, ServiceError, Status, SystemClock, TriageService, Verdict, WorkItem,
};

impl ServiceError {
    pub fn status_code(&self) -> StatusCode {
        match self {
            ServiceError::NoBundle => StatusCode::CONFLICT,
            ServiceError::Malformed(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind(), "detail": self.to_string() });
        (self.status_code(), Json(body)).into_response()
    }
}

type Shared = Arc<TriageService>;

async fn blocking<T, F>(svc: Shared, f: F) -> Result<Json<T>, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&TriageService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .expect("service task panicked")
        .map(Json)
}

async fn post_batch(State(svc): State<Shared>, body: String) -> Result<Json<BatchSummary>, ServiceError> {
    blocking(svc, move |s| s.enqueue_payload(&body)).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueueParams {
    status: Option<String>,
    label: Option<String>,
    rule: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

impl QueueParams {
    fn filter(&self) -> Result<QueueFilter, ServiceError> {
        let bad = |what: &str, v: &str, e: String| ServiceError::Malformed(format!("invalid {what} {v:?}: {e}"));
        Ok(QueueFilter {
            status: self
                .status
                .as_deref()
                .map(|v| v.parse().map_err(|e| bad("status", v, e)))
                .transpose()?,
            label: self
                .label
                .as_deref()
                .map(|v| v.parse().map_err(|e| bad("label", v, e)))
                .transpose()?,
            rule: self
                .rule
                .as_deref()
                .map(|v| v.parse().map_err(|e: mlmscreen_core::rules::RuleError| bad("rule", v, e.to_string())))
                .transpose()?,
        })
    }
}

async fn get_queue(
    State(svc): State<Shared>,
    params: Result<Query<QueueParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<QueuePage>, ServiceError> {
    let Query(p) = params.map_err(|e| ServiceError::Malformed(e.body_text()))?;
    let filter = p.filter()?;
    let page = p.page.unwrap_or(0);
    let size = p.page_size.unwrap_or(store::DEFAULT_PAGE_SIZE);
    blocking(svc, move |s| s.next_items(&filter, page, size)).await
}

async fn get_article(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Json<ArticleDetail>, ServiceError> {
    blocking(svc, move |s| s.article(&id)).await
}

async fn post_decision(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<DecisionAck>, ServiceError> {
    let req: DecisionRequest =
        serde_json::from_str(&body).map_err(|e| ServiceError::Malformed(format!("decision body: {e}")))?;
    blocking(svc, move |s| s.record_decision(&id, req)).await
}

async fn get_stats(State(svc): State<Shared>) -> Result<Json<QueueStats>, ServiceError> {
    blocking(svc, |s| Ok(s.stats())).await
}

async fn get_factsheet(State(svc): State<Shared>) -> Result<Json<serde_json::Value>, ServiceError> {
    blocking(svc, |s| s.factsheet()).await
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("route".into())
}

pub fn router(service: Arc<TriageService>) -> Router {
    Router::new()
        .route("/v1/batches", post(post_batch))
        .route("/v1/queue", get(get_queue))
        .route("/v1/articles/{id}", get(get_article))
        .route("/v1/articles/{id}/decision", post(post_decision))
        .route("/v1/stats", get(get_stats))
        .route("/v1/factsheet", get(get_factsheet))
        .fallback(fallback)
        .with_state(service)
}

/// Serves the API until the process is stopped.
pub async fn serve(service: Arc<TriageService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).await
}
