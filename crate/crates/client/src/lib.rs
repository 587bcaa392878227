//! Typed client for the service's HTTP API.

use std::time::Duration;

use reqwest::{Method, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use snipadapt_core::annotation::DefectAnnotation;
use snipadapt_core::api::{
    AnnotationAck, AnnotationRequest, AnswerSubmission, CaseView, CreateRunRequest, ErrorBody, PendingQuestion, RunDetail, RunState, RunSummary,
};
use snipadapt_core::metrics::MetricReport;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach {url}: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("{status}: {message}")]
    Api { status: StatusCode, message: String },
    #[error("run `{run_id}` failed: {message}")]
    RunFailed { run_id: String, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    fn as_str(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn send(&self, method: Method, path: &str, body: Option<&(impl Serialize + ?Sized)>) -> Result<Response, ClientError> {
        let url = format!("{}{path}", self.base);
        let mut req = self.http.request(method, &url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await.map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    async fn json<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&(impl Serialize + ?Sized)>) -> Result<T, ClientError> {
        let resp = self.send(method, path, body).await?;
        let url = resp.url().to_string();
        resp.json().await.map_err(|source| ClientError::Transport { url, source })
    }

    async fn text(&self, path: &str) -> Result<String, ClientError> {
        let resp = self.send(Method::GET, path, None::<&()>).await?;
        let url = resp.url().to_string();
        resp.text().await.map_err(|source| ClientError::Transport { url, source })
    }

    pub async fn list_runs(&self) -> Result<Vec<RunSummary>, ClientError> {
        self.json(Method::GET, "/api/runs", None::<&()>).await
    }

    pub async fn get_run(&self, run_id: &str) -> Result<RunDetail, ClientError> {
        self.json(Method::GET, &format!("/api/runs/{run_id}"), None::<&()>).await
    }

    pub async fn create_run(&self, req: &CreateRunRequest) -> Result<RunSummary, ClientError> {
        self.json(Method::POST, "/api/runs", Some(req)).await
    }

    /// Polls until the run leaves the running state.
    pub async fn wait_for_run(&self, run_id: &str, every: Duration) -> Result<RunSummary, ClientError> {
        loop {
            let summary = self.get_run(run_id).await?.summary;
            match summary.state {
                RunState::Running => tokio::time::sleep(every).await,
                RunState::Failed => {
                    return Err(ClientError::RunFailed {
                        run_id: run_id.to_string(),
                        message: summary.error.unwrap_or_default(),
                    })
                }
                _ => return Ok(summary),
            }
        }
    }

    pub async fn evaluate(&self, run_id: &str, force: bool) -> Result<MetricReport, ClientError> {
        self.json(Method::POST, &format!("/api/runs/{run_id}/evaluate?force={force}"), None::<&()>).await
    }

    /// The stored report, byte for byte.
    pub async fn report(&self, run_id: &str, format: ReportFormat) -> Result<String, ClientError> {
        self.text(&format!("/api/reports/{run_id}?format={}", format.as_str())).await
    }

    pub async fn case(&self, case_id: &str, run_id: Option<&str>) -> Result<CaseView, ClientError> {
        let path = match run_id {
            Some(r) => format!("/api/cases/{case_id}?run={r}"),
            None => format!("/api/cases/{case_id}"),
        };
        self.json(Method::GET, &path, None::<&()>).await
    }

    /// Pending question groups, waiting up to `wait` for one to appear.
    pub async fn pending(&self, wait: Duration) -> Result<Vec<PendingQuestion>, ClientError> {
        self.json(Method::GET, &format!("/api/questions/pending?wait={}", wait.as_secs()), None::<&()>).await
    }

    pub async fn answer(&self, question_id: &str, answers: Vec<String>) -> Result<(), ClientError> {
        self.send(Method::POST, &format!("/api/questions/{question_id}/answers"), Some(&AnswerSubmission { answers }))
            .await
            .map(drop)
    }

    pub async fn annotate(&self, annotation: DefectAnnotation) -> Result<AnnotationAck, ClientError> {
        self.json(Method::POST, "/api/annotations", Some(&AnnotationRequest { annotation })).await
    }

    pub async fn annotations_csv(&self) -> Result<String, ClientError> {
        self.text("/api/annotations?format=csv").await
    }
}
