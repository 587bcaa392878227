use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, Completion, FinishReason, ProviderConfig, ProviderError, SamplingConfig, Usage};
use crate::conversation::Turn;

/// Any endpoint speaking the OpenAI `/chat/completions` protocol.
pub struct OpenAiProvider {
    client: reqwest::Client,
    url: String,
    token: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default, Clone, Copy)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(OpenAiProvider {
            client,
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            token: std::env::var(&config.auth_env).ok().filter(|t| !t.is_empty()),
        })
    }

    async fn request(&self, model: &str, messages: &[Turn], sampling: &SamplingConfig, n: u32) -> Result<ChatResponse, ProviderError> {
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
            "n": n,
            "max_tokens": sampling.max_tokens,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Decode(e.to_string()))
    }
}

#[async_trait]
impl ChatProvider for OpenAiProvider {
    async fn chat(&self, model: &str, messages: &[Turn], sampling: &SamplingConfig) -> Result<Vec<Completion>, ProviderError> {
        let want = sampling.n_samples as usize;
        let mut out = Vec::with_capacity(want);
        // Some endpoints ignore `n`; keep asking for the remainder.
        while out.len() < want {
            let resp = self.request(model, messages, sampling, (want - out.len()) as u32).await?;
            if resp.choices.is_empty() {
                return Err(ProviderError::Decode("response has no choices".into()));
            }
            let usage = resp.usage.unwrap_or_default();
            let per_choice = resp.choices.len() as u64;
            for choice in resp.choices.into_iter().take(want - out.len()) {
                let finish_reason = match choice.finish_reason.as_deref() {
                    Some("length") => FinishReason::Length,
                    Some("stop") | None => FinishReason::Stop,
                    Some(_) => FinishReason::Error,
                };
                out.push(Completion {
                    content: choice.message.content.unwrap_or_default(),
                    finish_reason,
                    usage: Usage {
                        prompt_tokens: usage.prompt_tokens,
                        completion_tokens: usage.completion_tokens / per_choice,
                    },
                    latency_ms: 0,
                });
            }
        }
        Ok(out)
    }
}
