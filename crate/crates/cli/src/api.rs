//! JSON HTTP API over a [`PipelineService`].
//!
//! Every body carries `lexicon_version` and `run_id`; `run_id` is null for
//! responses not tied to a run.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hashscope_core::lexicon::{Category, TermStatus, Verdict};
use hashscope_core::pipeline::{ReportKind, RunConfig};
use hashscope_core::service::{PipelineService, ServiceError};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

type Svc = Arc<PipelineService>;

pub struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = match &e {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Store(_) | ServiceError::Pipeline(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1, "lexicon_version": null, "run_id": null }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

/// Runs blocking service work off the async executor.
async fn blocking<T, F>(svc: &Svc, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&PipelineService) -> Result<T, ServiceError> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

/// Builds the router; `console` is served under `/console` when given.
pub fn router(svc: Svc, console: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/lexicon", get(lexicon))
        .route("/api/candidates", get(candidates))
        .route("/api/candidates/{term}/decision", post(decide))
        .route("/api/runs", get(list_runs).post(submit_run))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/reports/{run_id}/{kind}", get(report))
        .route("/api/geo/{run_id}/clusters.geojson", get(clusters))
        .with_state(svc);
    match console {
        Some(dir) => api.nest_service("/console", ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Deserialize)]
struct LexiconQuery {
    status: Option<String>,
}

async fn lexicon(State(svc): State<Svc>, Query(q): Query<LexiconQuery>) -> ApiResult {
    let status = match q.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some(s) => Some(s.parse::<TermStatus>().map_err(bad)?),
    };
    let lex = svc.lexicon();
    let terms = svc.list_terms(status);
    Ok(Json(json!({
        "lexicon_version": lex.version(),
        "run_id": null,
        "digest": lex.digest(),
        "terms": terms,
    })))
}

async fn candidates(State(svc): State<Svc>) -> ApiResult {
    let version = svc.lexicon().version();
    Ok(Json(json!({
        "lexicon_version": version,
        "run_id": null,
        "candidates": svc.candidates(),
    })))
}

#[derive(Deserialize)]
struct DecisionBody {
    verdict: Verdict,
    category: Option<Category>,
    request_id: Option<String>,
    actor: Option<String>,
}

async fn decide(State(svc): State<Svc>, Path(term): Path<String>, Json(body): Json<DecisionBody>) -> ApiResult {
    let out = blocking(&svc, move |s| {
        s.decide(
            &term,
            body.verdict,
            body.category,
            body.actor.as_deref().unwrap_or("console"),
            body.request_id.as_deref(),
        )
    })
    .await?;
    Ok(Json(json!({
        "lexicon_version": out.lexicon_version,
        "run_id": null,
        "term": out.term,
    })))
}

#[derive(Deserialize)]
struct RunBody {
    #[serde(alias = "corpus")]
    corpus_ref: String,
    #[serde(default)]
    config: RunConfig,
    request_id: Option<String>,
}

async fn submit_run(State(svc): State<Svc>, Json(body): Json<RunBody>) -> ApiResult {
    let sub = blocking(&svc, move |s| s.submit_run(&body.corpus_ref, body.config, body.request_id.as_deref())).await?;
    Ok(Json(json!({
        "lexicon_version": sub.run.lexicon_version_used,
        "run_id": sub.run.run_id,
        "cached": sub.cached,
        "proposed": sub.proposed,
        "run": sub.run,
    })))
}

async fn list_runs(State(svc): State<Svc>) -> ApiResult {
    let runs = blocking(&svc, |s| s.list_runs()).await?;
    Ok(Json(json!({
        "lexicon_version": svc.lexicon().version(),
        "run_id": null,
        "runs": runs,
    })))
}

async fn get_run(State(svc): State<Svc>, Path(id): Path<String>) -> ApiResult {
    let run = blocking(&svc, move |s| s.get_run(&id)).await?;
    Ok(Json(json!({
        "lexicon_version": run.lexicon_version_used,
        "run_id": run.run_id,
        "run": run,
    })))
}

async fn report(State(svc): State<Svc>, Path((run_id, kind)): Path<(String, String)>) -> ApiResult {
    let kind: ReportKind = kind.parse().map_err(|e: String| ApiError(StatusCode::NOT_FOUND, e))?;
    Ok(Json(blocking(&svc, move |s| s.get_report(&run_id, kind)).await?))
}

async fn clusters(State(svc): State<Svc>, Path(run_id): Path<String>) -> ApiResult {
    Ok(Json(blocking(&svc, move |s| s.clusters_geojson(&run_id)).await?))
}
