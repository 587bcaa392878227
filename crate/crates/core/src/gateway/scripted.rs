use async_trait::async_trait;

use super::{ChatProvider, Completion, FinishReason, ProviderError, SamplingConfig, Usage};
use crate::conversation::Turn;

type Script = dyn Fn(&[Turn], &SamplingConfig) -> Result<Vec<String>, ProviderError> + Send + Sync;

/// Provider driven by a closure, for tests and fixture recording.
pub struct ScriptedProvider {
    script: Box<Script>,
}

impl ScriptedProvider {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[Turn], &SamplingConfig) -> Result<Vec<String>, ProviderError> + Send + Sync + 'static,
    {
        ScriptedProvider { script: Box::new(f) }
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn chat(&self, _model: &str, messages: &[Turn], sampling: &SamplingConfig) -> Result<Vec<Completion>, ProviderError> {
        Ok((self.script)(messages, sampling)?
            .into_iter()
            .map(|content| Completion {
                finish_reason: FinishReason::Stop,
                usage: Usage::default(),
                latency_ms: 0,
                content,
            })
            .collect())
    }
}
