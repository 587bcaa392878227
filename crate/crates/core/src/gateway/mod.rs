//! Chat-completion access with n-sample requests, bounded retries and
//! record/replay against a JSONL transcript store.

mod openai;
mod scripted;
mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::conversation::{Role, Turn};

pub use openai::OpenAiProvider;
pub use scripted::ScriptedProvider;
pub use store::{TranscriptEntry, TranscriptStore};

/// The temperature grid swept by default.
pub const DEFAULT_TEMPERATURES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub n_samples: u32,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_tag: Option<String>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.8,
            top_p: 1.0,
            n_samples: 5,
            max_tokens: 2048,
            seed_tag: None,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidSampling(m.to_string()));
        if !(0.0..=1.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 1]");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    pub fn with_n(&self, n: u32) -> Self {
        SamplingConfig {
            n_samples: n,
            ..self.clone()
        }
    }

    pub fn with_seed_tag(&self, tag: impl Into<String>) -> Self {
        SamplingConfig {
            seed_tag: Some(tag.into()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
    pub latency_ms: u64,
}

impl Completion {
    /// Enforces "empty only on error".
    fn normalized(mut self) -> Self {
        if self.content.is_empty() {
            self.finish_reason = FinishReason::Error;
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Decode(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            ProviderError::Decode(_) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("conversation is empty")]
    EmptyConversation,
    #[error("invalid sampling config: {0}")]
    InvalidSampling(String),
    #[error("replay miss for request {0}")]
    ReplayMiss(String),
    #[error("no live provider configured")]
    NoProvider,
    #[error("provider failed after {attempts} attempt(s): {source}")]
    Provider {
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error("provider returned {got} completions, {want} requested")]
    ShortResponse { got: usize, want: usize },
    #[error("transcript store: {0}")]
    Store(String),
}

/// One chat-completion backend.
#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn chat(&self, model: &str, messages: &[Turn], sampling: &SamplingConfig) -> Result<Vec<Completion>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for GatewayMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    pub timeout_s: u64,
    /// When set, the conversation is flattened into a single user turn
    /// using this template (`{role}` and `{content}` per turn).
    #[serde(default)]
    pub flatten_template: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            auth_env: "OPENAI_API_KEY".into(),
            timeout_s: 120,
            flatten_template: None,
        }
    }
}

/// Joins all turns into one user message for instruction-tuned models.
pub fn flatten_turns(turns: &[Turn], template: &str) -> Vec<Turn> {
    let body = turns
        .iter()
        .map(|t| template.replace("{role}", t.role.as_str()).replace("{content}", &t.content))
        .collect::<String>();
    vec![Turn {
        role: Role::User,
        content: body,
    }]
}

#[derive(Serialize)]
struct HashInput<'a> {
    model: &'a str,
    messages: &'a [Turn],
    sampling: &'a SamplingConfig,
}

/// SHA-256 over the canonical JSON of (model, messages, sampling).
pub fn request_hash(model: &str, messages: &[Turn], sampling: &SamplingConfig) -> String {
    let json = serde_json::to_vec(&HashInput {
        model,
        messages,
        sampling,
    })
    .expect("request serializes");
    hex::encode(Sha256::digest(&json))
}

pub struct GatewayBuilder {
    model: String,
    mode: GatewayMode,
    strict: bool,
    provider: Option<Arc<dyn ChatProvider>>,
    store_path: Option<PathBuf>,
    retry: RetryPolicy,
    max_in_flight: usize,
    flatten_template: Option<String>,
}

impl GatewayBuilder {
    pub fn provider(mut self, p: Arc<dyn ChatProvider>) -> Self {
        self.provider = Some(p);
        self
    }

    pub fn transcripts(mut self, path: impl Into<PathBuf>) -> Self {
        self.store_path = Some(path.into());
        self
    }

    /// Non-strict replay falls back to the live provider on a miss.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn flatten_template(mut self, t: Option<String>) -> Self {
        self.flatten_template = t;
        self
    }

    pub async fn build(self) -> Result<Gateway, GatewayError> {
        let store = match (&self.store_path, self.mode) {
            (Some(p), _) => Some(TranscriptStore::open(p).await?),
            (None, GatewayMode::Live) => None,
            (None, _) => return Err(GatewayError::Store("record and replay modes need a transcript path".into())),
        };
        if self.mode != GatewayMode::Replay && self.provider.is_none() {
            return Err(GatewayError::NoProvider);
        }
        Ok(Gateway {
            model: self.model,
            mode: self.mode,
            strict: self.strict,
            provider: self.provider,
            store,
            retry: self.retry,
            permits: Arc::new(Semaphore::new(self.max_in_flight)),
            flatten_template: self.flatten_template,
        })
    }
}

pub struct Gateway {
    model: String,
    mode: GatewayMode,
    strict: bool,
    provider: Option<Arc<dyn ChatProvider>>,
    store: Option<TranscriptStore>,
    retry: RetryPolicy,
    permits: Arc<Semaphore>,
    flatten_template: Option<String>,
}

impl Gateway {
    pub fn builder(model: impl Into<String>, mode: GatewayMode) -> GatewayBuilder {
        GatewayBuilder {
            model: model.into(),
            mode,
            strict: true,
            provider: None,
            store_path: None,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
            flatten_template: None,
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn store(&self) -> Option<&TranscriptStore> {
        self.store.as_ref()
    }

    /// Returns exactly `sampling.n_samples` completions.
    pub async fn complete(&self, conversation: &[Turn], sampling: &SamplingConfig) -> Result<Vec<Completion>, GatewayError> {
        if conversation.is_empty() {
            return Err(GatewayError::EmptyConversation);
        }
        sampling.validate()?;
        let messages = match &self.flatten_template {
            Some(t) => flatten_turns(conversation, t),
            None => conversation.to_vec(),
        };
        let hash = request_hash(&self.model, &messages, sampling);
        let want = sampling.n_samples as usize;

        if self.mode != GatewayMode::Live {
            if let Some(entry) = self.store.as_ref().and_then(|s| s.get(&hash)) {
                tracing::debug!(%hash, "transcript hit");
                return Ok(entry.completions());
            }
            if self.mode == GatewayMode::Replay && (self.strict || self.provider.is_none()) {
                return Err(GatewayError::ReplayMiss(hash));
            }
        }

        let completions = self.call_live(&messages, sampling).await?;
        if completions.len() != want {
            return Err(GatewayError::ShortResponse {
                got: completions.len(),
                want,
            });
        }
        if self.mode == GatewayMode::Record {
            let store = self.store.as_ref().expect("record mode has a store");
            store.append(TranscriptEntry::new(hash, &self.model, &messages, sampling, &completions)).await?;
        }
        Ok(completions)
    }

    async fn call_live(&self, messages: &[Turn], sampling: &SamplingConfig) -> Result<Vec<Completion>, GatewayError> {
        let provider = self.provider.as_ref().ok_or(GatewayError::NoProvider)?;
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let mut attempt = 0;
        loop {
            attempt += 1;
            let started = Instant::now();
            match provider.chat(&self.model, messages, sampling).await {
                Ok(cs) => {
                    let elapsed = started.elapsed().as_millis() as u64;
                    return Ok(cs
                        .into_iter()
                        .map(|mut c| {
                            if c.latency_ms == 0 {
                                c.latency_ms = elapsed;
                            }
                            c.normalized()
                        })
                        .collect());
                }
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    let delay = self.retry.base_delay_ms.saturating_mul(1 << (attempt - 1));
                    tracing::warn!(attempt, error = %e, delay_ms = delay, "retrying chat request");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                }
                Err(e) => {
                    return Err(GatewayError::Provider {
                        attempts: attempt,
                        source: e,
                    })
                }
            }
        }
    }

    /// One `complete` call per temperature.
    pub async fn sweep_grid(
        &self,
        conversation: &[Turn],
        base: &SamplingConfig,
        temperatures: &[f64],
    ) -> Result<BTreeMap<OrderedFloat<f64>, Vec<Completion>>, GatewayError> {
        if let Some(t) = temperatures.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(GatewayError::InvalidSampling(format!("temperature {t} outside [0, 1]")));
        }
        let mut out = BTreeMap::new();
        for &t in temperatures {
            let sampling = SamplingConfig {
                temperature: t,
                ..base.clone()
            };
            out.insert(OrderedFloat(t), self.complete(conversation, &sampling).await?);
        }
        Ok(out)
    }
}
