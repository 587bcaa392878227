//! Persisted queue of question groups awaiting a human, and the answer
//! provider that feeds orchestrator sessions from it.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use snipadapt_core::api::PendingQuestion;
use snipadapt_core::dataset::AdaptationCase;
use snipadapt_core::orchestrator::{AnswerError, AnswerProvider, AnswerSet, Question};
use snipadapt_core::run::now_rfc3339;
use thiserror::Error;
use tokio::sync::{oneshot, Notify};

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("question log {path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown question `{0}`")]
    Unknown(String),
    #[error("question `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("{0}")]
    BadAnswers(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Asked { question: PendingQuestion },
    Answered { id: String, answers: Vec<String> },
}

/// Result of asking: either answered earlier (for example before a
/// restart) or pending until a human replies.
pub enum Ticket {
    Ready(Vec<String>),
    Wait(oneshot::Receiver<Vec<String>>),
}

#[derive(Default)]
struct Inner {
    pending: Vec<PendingQuestion>,
    answered: HashMap<String, Vec<String>>,
    /// Normalized question text -> latest answer.
    cache: HashMap<String, String>,
    waiters: HashMap<String, oneshot::Sender<Vec<String>>>,
}

/// Question groups in arrival order, backed by an append-only event log so
/// a restarted service keeps every pending group and every answer.
pub struct QuestionQueue {
    path: PathBuf,
    inner: Mutex<Inner>,
    arrived: Notify,
}

/// Lowercase, single-spaced, without trailing punctuation.
pub fn normalize_question(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['?', '.', '!', ':'])
        .to_lowercase()
}

/// Stable id of one session's question group.
pub fn question_id(run_id: &str, case_id: &str, sample: usize, questions: &[Question]) -> String {
    let mut h = Sha256::new();
    for part in [run_id, case_id, &sample.to_string()] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    for q in questions {
        h.update(q.text.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..8])
}

impl QuestionQueue {
    pub fn open(path: &Path) -> Result<Self, QueueError> {
        let err = |message: String| QueueError::Io {
            path: path.display().to_string(),
            message,
        };
        let mut inner = Inner::default();
        match std::fs::read_to_string(path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let event: Event = serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
                    inner.apply(event);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(err(e.to_string())),
        }
        Ok(QuestionQueue {
            path: path.to_path_buf(),
            inner: Mutex::new(inner),
            arrived: Notify::new(),
        })
    }

    fn persist(&self, event: &Event) -> Result<(), QueueError> {
        let err = |e: std::io::Error| QueueError::Io {
            path: self.path.display().to_string(),
            message: e.to_string(),
        };
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&self.path).map_err(err)?;
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(err)?;
        f.sync_data().map_err(err)
    }

    pub fn pending(&self) -> Vec<PendingQuestion> {
        self.inner.lock().expect("queue lock").pending.clone()
    }

    /// Returns the pending groups as soon as there is at least one, or an
    /// empty list once `horizon` has passed.
    pub async fn wait_pending(&self, horizon: Duration) -> Vec<PendingQuestion> {
        let arrived = self.arrived.notified();
        tokio::pin!(arrived);
        arrived.as_mut().enable();
        let now = self.pending();
        if !now.is_empty() || horizon.is_zero() {
            return now;
        }
        let _ = tokio::time::timeout(horizon, arrived).await;
        self.pending()
    }

    /// Earlier answers to the same questions, index-aligned.
    pub fn prefill(&self, questions: &[Question]) -> Vec<Option<String>> {
        let inner = self.inner.lock().expect("queue lock");
        questions.iter().map(|q| inner.cache.get(&normalize_question(&q.text)).cloned()).collect()
    }

    /// Enqueues `question` unless it is already pending or answered. A
    /// group asked again after a restart keeps its place in the queue.
    pub fn ask(&self, question: PendingQuestion) -> Result<Ticket, QueueError> {
        let mut inner = self.inner.lock().expect("queue lock");
        if let Some(a) = inner.answered.get(&question.id) {
            return Ok(Ticket::Ready(a.clone()));
        }
        let id = question.id.clone();
        if !inner.pending.iter().any(|p| p.id == id) {
            let event = Event::Asked { question };
            self.persist(&event)?;
            inner.apply(event);
            self.arrived.notify_waiters();
        }
        let (tx, rx) = oneshot::channel();
        inner.waiters.insert(id, tx);
        Ok(Ticket::Wait(rx))
    }

    pub fn answer(&self, id: &str, answers: Vec<String>) -> Result<(), QueueError> {
        let mut inner = self.inner.lock().expect("queue lock");
        let Some(pos) = inner.pending.iter().position(|p| p.id == id) else {
            return Err(if inner.answered.contains_key(id) {
                QueueError::AlreadyAnswered(id.to_string())
            } else {
                QueueError::Unknown(id.to_string())
            });
        };
        let want = inner.pending[pos].questions.len();
        if answers.len() != want {
            return Err(QueueError::BadAnswers(format!("expected {want} answers, got {}", answers.len())));
        }
        if let Some(i) = answers.iter().position(|a| a.trim().is_empty()) {
            return Err(QueueError::BadAnswers(format!("answer {} is empty", i + 1)));
        }
        let event = Event::Answered {
            id: id.to_string(),
            answers: answers.clone(),
        };
        self.persist(&event)?;
        inner.apply(event);
        if let Some(tx) = inner.waiters.remove(id) {
            let _ = tx.send(answers);
        }
        Ok(())
    }
}

impl Inner {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Asked { question } => {
                self.pending.retain(|p| p.id != question.id);
                self.pending.push(question);
            }
            Event::Answered { id, answers } => {
                if let Some(pos) = self.pending.iter().position(|p| p.id == id) {
                    let q = self.pending.remove(pos);
                    for (question, answer) in q.questions.iter().zip(&answers) {
                        self.cache.insert(normalize_question(&question.text), answer.clone());
                    }
                }
                self.answered.insert(id, answers);
            }
        }
    }
}

/// Routes a session's questions to the human through the queue.
pub struct HumanChannel {
    queue: Arc<QuestionQueue>,
    run_id: String,
    timeout: Duration,
}

impl HumanChannel {
    pub fn new(queue: Arc<QuestionQueue>, run_id: impl Into<String>, timeout: Duration) -> Self {
        HumanChannel {
            queue,
            run_id: run_id.into(),
            timeout,
        }
    }
}

#[async_trait]
impl AnswerProvider for HumanChannel {
    async fn answer(&self, case: &AdaptationCase, sample: usize, questions: &[Question]) -> Result<AnswerSet, AnswerError> {
        let pending = PendingQuestion {
            id: question_id(&self.run_id, &case.case_id, sample, questions),
            run_id: self.run_id.clone(),
            case_id: case.case_id.clone(),
            sample,
            requirement: case.requirement.clone(),
            retrieved_snippet: case.retrieved_snippet.clone(),
            context: case.context.enriched.clone(),
            questions: questions.to_vec(),
            prefill: self.queue.prefill(questions),
            created_at: now_rfc3339(),
        };
        let answers = match self.queue.ask(pending).map_err(|e| AnswerError::Failed(e.to_string()))? {
            Ticket::Ready(a) => a,
            Ticket::Wait(rx) => match tokio::time::timeout(self.timeout, rx).await {
                Ok(Ok(a)) => a,
                Ok(Err(_)) => return Err(AnswerError::Failed("question queue closed".into())),
                Err(_) => return Err(AnswerError::Timeout),
            },
        };
        if answers.len() != questions.len() {
            return Err(AnswerError::Count {
                want: questions.len(),
                got: answers.len(),
            });
        }
        Ok(AnswerSet {
            answers,
            transcript: None,
        })
    }

    fn is_interactive(&self) -> bool {
        true
    }
}
