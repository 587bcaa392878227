use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::Mutex;

use super::{Completion, FinishReason, GatewayError, SamplingConfig, Usage};
use crate::conversation::Turn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRequest {
    pub messages: Vec<Turn>,
    pub sampling: SamplingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub model: String,
    pub request: StoredRequest,
    pub responses: Vec<String>,
    pub finish_reasons: Vec<FinishReason>,
    #[serde(default)]
    pub usage: Vec<Usage>,
    pub timestamp: String,
}

impl TranscriptEntry {
    pub fn new(hash: String, model: &str, messages: &[Turn], sampling: &SamplingConfig, completions: &[Completion]) -> Self {
        TranscriptEntry {
            request_hash: hash,
            model: model.to_string(),
            request: StoredRequest {
                messages: messages.to_vec(),
                sampling: sampling.clone(),
            },
            responses: completions.iter().map(|c| c.content.clone()).collect(),
            finish_reasons: completions.iter().map(|c| c.finish_reason).collect(),
            usage: completions.iter().map(|c| c.usage).collect(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Replayed completions carry zero latency.
    pub fn completions(&self) -> Vec<Completion> {
        self.responses
            .iter()
            .enumerate()
            .map(|(i, content)| Completion {
                content: content.clone(),
                finish_reason: self.finish_reasons.get(i).copied().unwrap_or(FinishReason::Stop),
                usage: self.usage.get(i).copied().unwrap_or_default(),
                latency_ms: 0,
            })
            .collect()
    }
}

/// JSONL transcript file with an in-memory index. Appends are serialized.
pub struct TranscriptStore {
    path: PathBuf,
    index: RwLock<HashMap<String, TranscriptEntry>>,
    writer: Mutex<()>,
}

impl TranscriptStore {
    pub async fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut index = HashMap::new();
        match tokio::fs::read_to_string(path).await {
            Ok(text) => {
                for (lineno, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: TranscriptEntry = serde_json::from_str(line)
                        .map_err(|e| GatewayError::Store(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
                    index.entry(entry.request_hash.clone()).or_insert(entry);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(GatewayError::Store(format!("{}: {e}", path.display()))),
        }
        Ok(TranscriptStore {
            path: path.to_path_buf(),
            index: RwLock::new(index),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<TranscriptEntry> {
        self.index.read().expect("index lock").get(hash).cloned()
    }

    /// Appends unless an entry with the same hash already exists.
    pub async fn append(&self, entry: TranscriptEntry) -> Result<(), GatewayError> {
        let _guard = self.writer.lock().await;
        if self.get(&entry.request_hash).is_some() {
            return Ok(());
        }
        let mut line = serde_json::to_string(&entry).map_err(|e| GatewayError::Store(e.to_string()))?;
        line.push('\n');
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            tokio::fs::create_dir_all(dir).await.map_err(|e| GatewayError::Store(e.to_string()))?;
        }
        let mut f = tokio::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .await
            .map_err(|e| GatewayError::Store(format!("{}: {e}", self.path.display())))?;
        f.write_all(line.as_bytes()).await.map_err(|e| GatewayError::Store(e.to_string()))?;
        f.flush().await.map_err(|e| GatewayError::Store(e.to_string()))?;
        self.index.write().expect("index lock").insert(entry.request_hash.clone(), entry);
        Ok(())
    }
}
