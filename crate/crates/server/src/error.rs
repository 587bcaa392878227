use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use snipadapt_core::annotation::AnnotationError;
use snipadapt_core::api::ErrorBody;
use snipadapt_core::pipeline::PipelineError;
use snipadapt_core::run::RunError;

use crate::questions::QueueError;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::UnknownRun(_) => ApiError::not_found(e.to_string()),
            RunError::InvalidRunId(_) => ApiError::bad_request(e.to_string()),
            RunError::ManifestMismatch(_) => ApiError::conflict(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Run(r) => r.into(),
            PipelineError::UnknownCase(_) => ApiError::not_found(e.to_string()),
            PipelineError::MissingSnippet(_) | PipelineError::Dataset(_) => ApiError::bad_request(e.to_string()),
            PipelineError::Incomplete { .. } | PipelineError::NotEvaluated(_) => ApiError::conflict(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<QueueError> for ApiError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::Unknown(_) => ApiError::not_found(e.to_string()),
            QueueError::AlreadyAnswered(_) => ApiError::conflict(e.to_string()),
            QueueError::BadAnswers(_) => ApiError::bad_request(e.to_string()),
            QueueError::Io { .. } => ApiError::internal(e.to_string()),
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Store { .. } | AnnotationError::Metric(_) => ApiError::internal(e.to_string()),
            AnnotationError::UnknownCase(_) => ApiError::not_found(e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}
