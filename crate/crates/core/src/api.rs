//! Request and response bodies of the HTTP API, shared by the service and
//! its clients.

use serde::{Deserialize, Serialize};

use crate::annotation::DefectAnnotation;
use crate::conversation::Conversation;
use crate::gateway::{GatewayError, SamplingConfig};
use crate::harness::TestOutcome;
use crate::metrics::{CodeBleuScore, MetricReport};
use crate::orchestrator::{Question, SampleStatus};
use crate::prompt::StrategyKind;
use crate::run::RunManifest;

/// Seconds a pending-question poll may block.
pub const POLL_HORIZON_S: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Adapted,
    Evaluated,
    Failed,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub state: RunState,
    pub cases_done: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRunRequest {
    pub strategy: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<String>>,
}

impl CreateRunRequest {
    pub fn new(strategy: StrategyKind) -> Self {
        CreateRunRequest {
            strategy,
            run_id: None,
            temperature: None,
            samples: None,
            max_tokens: None,
            cases: None,
        }
    }

    /// Default sampling with the requested overrides, validated.
    pub fn sampling(&self) -> Result<SamplingConfig, GatewayError> {
        let defaults = SamplingConfig::default();
        let s = SamplingConfig {
            temperature: self.temperature.unwrap_or(defaults.temperature),
            n_samples: self.samples.unwrap_or(defaults.n_samples),
            max_tokens: self.max_tokens.unwrap_or(defaults.max_tokens),
            ..defaults
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBrief {
    pub case_id: String,
    pub samples: usize,
    /// Passing samples, once evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDetail {
    pub summary: RunSummary,
    pub cases: Vec<CaseBrief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleView {
    pub index: usize,
    pub code: String,
    pub status: SampleStatus,
    pub conversation: Conversation,
    pub questions: Vec<Question>,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TestOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembly_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebleu: Option<CodeBleuScore>,
}

/// Everything shown when reviewing one adaptation case of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub run_id: String,
    pub case_id: String,
    pub requirement: String,
    pub retrieved_snippet: String,
    pub context: String,
    pub canonical_solution: String,
    pub samples: Vec<SampleView>,
}

/// One group of questions from one session, waiting for a human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuestion {
    pub id: String,
    pub run_id: String,
    pub case_id: String,
    pub sample: usize,
    pub requirement: String,
    pub retrieved_snippet: String,
    pub context: String,
    pub questions: Vec<Question>,
    /// Earlier answers to the same questions, index-aligned.
    pub prefill: Vec<Option<String>>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSubmission {
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    #[serde(flatten)]
    pub annotation: DefectAnnotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationAck {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub type ReportBody = MetricReport;
