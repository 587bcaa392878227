//! HTTP service over the run store: starts runs, relays questions to a
//! human, serves reports and case views, records annotations and hosts the
//! review UI.

mod error;
pub mod questions;
mod state;

use std::net::SocketAddr;
use std::path::{Component, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use snipadapt_core::api::{
    AnnotationAck, AnnotationRequest, AnswerSubmission, CaseBrief, CaseView, CreateRunRequest, PendingQuestion, RunDetail, RunSummary, SampleView,
    POLL_HORIZON_S,
};
use snipadapt_core::metrics::MetricReport;

pub use error::ApiError;
pub use questions::{HumanChannel, QuestionQueue};
pub use state::{AppState, ANNOTATIONS_FILE, QUESTIONS_FILE};

const FALLBACK_UI: &str = include_str!("../assets/index.html");

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    let ui_dir = state.layered.settings.ui_dir.clone();
    let api = Router::new()
        .route("/api/runs", get(list_runs).post(create_run))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/evaluate", post(evaluate_run))
        .route("/api/cases/{id}", get(get_case))
        .route("/api/questions/pending", get(pending_questions))
        .route("/api/questions/{id}/answers", post(answer_questions))
        .route("/api/annotations", get(export_annotations).post(create_annotation))
        .route("/api/reports/{run_id}", get(get_report))
        .with_state(state);
    api.fallback(move |uri: Uri| static_file(ui_dir.clone(), uri))
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

/// Files of the built UI; the embedded page when no build is present.
async fn static_file(ui_dir: PathBuf, uri: Uri) -> Response {
    if uri.path().starts_with("/api/") {
        return ApiError::not_found(format!("no route {}", uri.path())).into_response();
    }
    let rel = uri.path().trim_start_matches('/');
    let safe = std::path::Path::new(rel).components().all(|c| matches!(c, Component::Normal(_)));
    if !ui_dir.join("index.html").is_file() {
        return if rel.is_empty() || rel == "index.html" {
            Html(FALLBACK_UI).into_response()
        } else {
            StatusCode::NOT_FOUND.into_response()
        };
    }
    let mut path = ui_dir.join(if rel.is_empty() || !safe { "index.html" } else { rel });
    if !path.is_file() {
        // Client-side routes fall back to the single page.
        path = ui_dir.join("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    serve_on(listener, router(state)).await
}

/// Serves `app` on an already bound listener.
pub async fn serve_on(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

async fn list_runs(State(state): Shared) -> Result<Json<Vec<RunSummary>>, ApiError> {
    let manifests = state.store.list()?;
    let summaries = manifests.into_iter().map(|m| state.summary(m)).collect::<Result<_, _>>()?;
    Ok(Json(summaries))
}

async fn create_run(State(state): Shared, Json(req): Json<CreateRunRequest>) -> Result<(StatusCode, Json<RunSummary>), ApiError> {
    let summary = state.start_run(req)?;
    Ok((StatusCode::ACCEPTED, Json(summary)))
}

async fn get_run(State(state): Shared, Path(id): Path<String>) -> Result<Json<RunDetail>, ApiError> {
    let run = state.store.open(&id)?;
    let summary = state.summary(run.manifest()?)?;
    let evaluations = run.evaluations()?;
    let cases = run
        .records()?
        .into_iter()
        .map(|r| CaseBrief {
            passed: evaluations
                .as_ref()
                .and_then(|e| e.iter().find(|c| c.case_id == r.record.case_id))
                .map(|c| c.samples.iter().filter(|s| s.passed).count()),
            case_id: r.record.case_id,
            samples: r.record.samples.len(),
        })
        .collect();
    Ok(Json(RunDetail { summary, cases }))
}

#[derive(Deserialize)]
struct EvaluateQuery {
    #[serde(default)]
    force: bool,
}

async fn evaluate_run(State(state): Shared, Path(id): Path<String>, Query(q): Query<EvaluateQuery>) -> Result<Json<MetricReport>, ApiError> {
    Ok(Json(state.evaluate(&id, q.force).await?))
}

#[derive(Deserialize)]
struct CaseQuery {
    run: Option<String>,
}

async fn get_case(State(state): Shared, Path(id): Path<String>, Query(q): Query<CaseQuery>) -> Result<Json<CaseView>, ApiError> {
    let case = state.case(&id).ok_or_else(|| ApiError::not_found(format!("unknown case `{id}`")))?;
    let mut view = CaseView {
        run_id: q.run.clone().unwrap_or_default(),
        case_id: case.case_id.clone(),
        requirement: case.requirement.clone(),
        retrieved_snippet: case.retrieved_snippet.clone(),
        context: case.context.enriched.clone(),
        canonical_solution: case.canonical_solution.clone(),
        samples: Vec::new(),
    };
    if let Some(run_id) = q.run {
        let run = state.store.open(&run_id)?;
        let record = run
            .records()?
            .into_iter()
            .find(|r| r.record.case_id == id)
            .ok_or_else(|| ApiError::not_found(format!("run `{run_id}` has no record for `{id}`")))?;
        let evaluation = run.evaluations()?.and_then(|e| e.into_iter().find(|c| c.case_id == id));
        view.samples = record
            .record
            .samples
            .into_iter()
            .map(|s| {
                let eval = evaluation.as_ref().and_then(|e| e.samples.iter().find(|x| x.index == s.index));
                SampleView {
                    index: s.index,
                    code: s.code,
                    status: s.status,
                    conversation: s.conversation,
                    questions: s.questions,
                    answers: s.answers,
                    passed: eval.map(|e| e.passed),
                    outcome: eval.and_then(|e| e.outcome.clone()),
                    assembly_error: eval.and_then(|e| e.assembly_error.as_ref().map(|(_, m)| m.clone())),
                    codebleu: eval.and_then(|e| e.codebleu),
                }
            })
            .collect();
    }
    Ok(Json(view))
}

#[derive(Deserialize)]
struct PendingQuery {
    /// Seconds to wait for a question when none is pending.
    wait: Option<u64>,
}

async fn pending_questions(State(state): Shared, Query(q): Query<PendingQuery>) -> Json<Vec<PendingQuestion>> {
    let wait = q.wait.unwrap_or(POLL_HORIZON_S).min(POLL_HORIZON_S);
    Json(state.questions.wait_pending(Duration::from_secs(wait)).await)
}

async fn answer_questions(State(state): Shared, Path(id): Path<String>, Json(body): Json<AnswerSubmission>) -> Result<StatusCode, ApiError> {
    state.questions.answer(&id, body.answers)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn create_annotation(State(state): Shared, Json(req): Json<AnnotationRequest>) -> Result<(StatusCode, Json<AnnotationAck>), ApiError> {
    let id = state.annotations.record(req.annotation, &state.case_ids())?;
    Ok((StatusCode::CREATED, Json(AnnotationAck { id })))
}

async fn export_annotations(State(state): Shared) -> Result<Response, ApiError> {
    let csv = state.annotations.export_csv().map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(State(state): Shared, Path(run_id): Path<String>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    let run = state.store.open(&run_id)?;
    let (csv, content_type) = match q.format.as_deref().unwrap_or("json") {
        "json" => (false, "application/json"),
        "csv" => (true, "text/csv; charset=utf-8"),
        other => return Err(ApiError::bad_request(format!("unknown format `{other}`"))),
    };
    let text = run
        .report_text(csv)?
        .ok_or_else(|| ApiError::not_found(format!("run `{run_id}` has not been evaluated")))?;
    Ok(([(header::CONTENT_TYPE, content_type)], text).into_response())
}
