//! Scripted models and answer providers for the flipped interaction.

use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use snipadapt_core::conversation::Turn;
use snipadapt_core::dataset::AdaptationCase;
use snipadapt_core::gateway::{ChatProvider, Gateway, GatewayMode, SamplingConfig, ScriptedProvider};
use snipadapt_core::orchestrator::{AnswerError, AnswerProvider, AnswerSet, CaseRecord, Orchestrator, Question};
use snipadapt_core::prompt::{PromptEngine, StrategyKind};

pub const CODE: &str = "```python\ndef add_item(self, name, price, quantity=1):\n    self.cart.append({'name': name, 'price': price, 'quantity': quantity})\n```";

pub fn case() -> AdaptationCase {
    super::cases_with_snippets().remove(0)
}

pub async fn live(provider: impl ChatProvider + 'static) -> Arc<Gateway> {
    Arc::new(Gateway::builder("scripted", GatewayMode::Live).provider(Arc::new(provider)).build().await.unwrap())
}

pub fn orchestrator(gateway: Arc<Gateway>) -> Orchestrator {
    Orchestrator::new(gateway, Arc::new(PromptEngine::default()))
}

/// Asks `k` questions after the flipped instruction, then answers with
/// `final_reply`.
pub fn asking(k: usize, final_reply: &'static str) -> ScriptedProvider {
    ScriptedProvider::new(move |msgs: &[Turn], _s: &SamplingConfig| {
        let last = &msgs.last().unwrap().content;
        let reply = if last.contains("Reply only with \"Understood.\"") {
            "Understood.".to_string()
        } else if last.contains("### Interaction") {
            if k == 0 {
                CODE.to_string()
            } else {
                (1..=k).map(|i| format!("{i}. Is detail number {i} required?")).collect::<Vec<_>>().join("\n")
            }
        } else {
            final_reply.to_string()
        };
        Ok(vec![reply])
    })
}

/// Records every question group it is asked.
#[derive(Default)]
pub struct Recorder {
    pub seen: Mutex<Vec<Vec<Question>>>,
}

#[async_trait]
impl AnswerProvider for Recorder {
    async fn answer(&self, _case: &AdaptationCase, _sample: usize, questions: &[Question]) -> Result<AnswerSet, AnswerError> {
        self.seen.lock().unwrap().push(questions.to_vec());
        Ok(AnswerSet {
            answers: questions.iter().map(|q| format!("answer to {}", q.index)).collect(),
            transcript: None,
        })
    }
}

pub async fn flipped(k: usize, final_reply: &'static str, n: u32) -> (CaseRecord, Vec<Vec<Question>>) {
    let orch = orchestrator(live(asking(k, final_reply)).await);
    let rec = Recorder::default();
    let sampling = SamplingConfig::default().with_n(n);
    let record = orch.run_case(&case(), StrategyKind::HumanLlm, None, Some(&rec), &sampling).await.unwrap();
    let seen = rec.seen.into_inner().unwrap();
    (record, seen)
}
