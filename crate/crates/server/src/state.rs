use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use snipadapt_core::annotation::AnnotationStore;
use snipadapt_core::api::{CreateRunRequest, RunState, RunSummary};
use snipadapt_core::config::LayeredSettings;
use snipadapt_core::dataset::{derive_all, load_benchmark, read_snippet_cache, AdaptationCase, LoadMode, SnippetEntry};
use snipadapt_core::harness::Executor;
use snipadapt_core::metrics::{CodeBleuWeights, MetricReport};
use snipadapt_core::orchestrator::AnswerProvider;
use snipadapt_core::pipeline::{attach_available, build_gateway, select_cases, with_snippets, Pipeline};
use snipadapt_core::prompt::{PromptEngine, StrategyKind};
use snipadapt_core::run::{file_hash, RunDir, RunManifest, RunStore};

use crate::error::ApiError;
use crate::questions::{HumanChannel, QuestionQueue};

pub const QUESTIONS_FILE: &str = "questions.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

#[derive(Debug, Clone)]
enum Activity {
    Running,
    Failed(String),
}

/// Shared service state. Everything except in-flight bookkeeping lives on
/// disk under the runs directory.
pub struct AppState {
    pub layered: LayeredSettings,
    pub store: RunStore,
    pub pipeline: Arc<Pipeline>,
    pub questions: Arc<QuestionQueue>,
    pub annotations: AnnotationStore,
    cases: Vec<AdaptationCase>,
    snippets: Vec<SnippetEntry>,
    dataset_hash: String,
    snippets_hash: Option<String>,
    activity: Mutex<HashMap<String, Activity>>,
    human: Mutex<Option<String>>,
}

impl AppState {
    /// State over already-loaded cases; snippets may be empty when no cache
    /// exists yet.
    pub fn new(
        layered: LayeredSettings,
        pipeline: Arc<Pipeline>,
        cases: Vec<AdaptationCase>,
        snippets: Vec<SnippetEntry>,
        dataset_hash: String,
        snippets_hash: Option<String>,
    ) -> Result<Self, ApiError> {
        let runs_dir = layered.settings.runs_dir.clone();
        let questions = QuestionQueue::open(&runs_dir.join(QUESTIONS_FILE))?;
        let annotations = AnnotationStore::open(&runs_dir.join(ANNOTATIONS_FILE))?;
        Ok(AppState {
            store: RunStore::new(runs_dir),
            layered,
            pipeline,
            questions: Arc::new(questions),
            annotations,
            cases,
            snippets,
            dataset_hash,
            snippets_hash,
            activity: Mutex::new(HashMap::new()),
            human: Mutex::new(None),
        })
    }

    /// Loads the benchmark, snippet cache and gateway named by the settings.
    pub async fn from_settings(layered: LayeredSettings) -> Result<Self, ApiError> {
        let s = &layered.settings;
        let bench = load_benchmark(&s.benchmark, LoadMode::Strict).map_err(|e| ApiError::internal(e.to_string()))?;
        let cases = derive_all(&bench.units).map_err(|e| ApiError::internal(e.to_string()))?;
        let dataset_hash = file_hash(&s.benchmark)?;
        let (snippets, snippets_hash) = if s.snippets.is_file() {
            let entries = read_snippet_cache(&s.snippets).map_err(|e| ApiError::internal(e.to_string()))?;
            (entries, Some(file_hash(&s.snippets)?))
        } else {
            tracing::warn!(path = %s.snippets.display(), "no snippet cache; only retrieval-free strategies can run");
            (Vec::new(), None)
        };
        let gateway = build_gateway(s).await.map_err(|e| ApiError::internal(e.to_string()))?;
        let pipeline = Pipeline::new(
            Arc::new(gateway),
            Arc::new(PromptEngine::default()),
            Executor::new(s.python.clone(), s.limits.clone(), s.workers),
            CodeBleuWeights::default(),
            s.workers,
        );
        Self::new(layered, Arc::new(pipeline), cases, snippets, dataset_hash, snippets_hash)
    }

    pub fn case(&self, id: &str) -> Option<AdaptationCase> {
        let case = self.cases.iter().find(|c| c.case_id == id)?;
        attach_available(std::slice::from_ref(case), &self.snippets).pop()
    }

    /// All cases, with snippets attached where the cache has one.
    pub fn cases(&self) -> Vec<AdaptationCase> {
        attach_available(&self.cases, &self.snippets)
    }

    pub fn case_ids(&self) -> BTreeSet<String> {
        self.cases.iter().map(|c| c.case_id.clone()).collect()
    }

    pub fn summary(&self, manifest: RunManifest) -> Result<RunSummary, ApiError> {
        let run = self.store.open(&manifest.run_id)?;
        let cases_done = run.records()?.len();
        let activity = self.activity.lock().expect("activity lock").get(&manifest.run_id).cloned();
        let (state, error) = match activity {
            Some(Activity::Running) => (RunState::Running, None),
            Some(Activity::Failed(e)) => (RunState::Failed, Some(e)),
            None if run.report_text(false)?.is_some() => (RunState::Evaluated, None),
            None if cases_done >= manifest.case_ids.len() => (RunState::Adapted, None),
            None => (RunState::Incomplete, None),
        };
        Ok(RunSummary {
            manifest,
            state,
            cases_done,
            error,
        })
    }

    pub fn is_running(&self, run_id: &str) -> bool {
        matches!(self.activity.lock().expect("activity lock").get(run_id), Some(Activity::Running))
    }

    /// Creates (or resumes) a run and adapts it in the background.
    pub fn start_run(self: &Arc<Self>, req: CreateRunRequest) -> Result<RunSummary, ApiError> {
        let sampling = req.sampling().map_err(|e| ApiError::bad_request(e.to_string()))?;
        let selected = select_cases(self.cases.clone(), req.cases.as_deref())?;
        let cases = if req.strategy.needs_snippet() {
            with_snippets(&selected, &self.snippets)?
        } else {
            selected
        };
        let run_id = req.run_id.clone().unwrap_or_else(|| self.store.fresh_id(req.strategy.as_str()));
        if self.is_running(&run_id) {
            return Err(ApiError::conflict(format!("run `{run_id}` is already running")));
        }
        let human = req.strategy == StrategyKind::HumanLlm;
        if human {
            let mut slot = self.human.lock().expect("human lock");
            if let Some(other) = slot.as_ref() {
                return Err(ApiError::conflict(format!("human run `{other}` is in progress; only one human run at a time")));
            }
            *slot = Some(run_id.clone());
        }
        let manifest = self.pipeline.manifest(
            &run_id,
            req.strategy,
            &sampling,
            &self.layered,
            &cases,
            self.dataset_hash.clone(),
            self.snippets_hash.clone(),
        );
        let run = match self.store.create(&manifest) {
            Ok(r) => r,
            Err(e) => {
                if human {
                    *self.human.lock().expect("human lock") = None;
                }
                return Err(e.into());
            }
        };
        self.activity.lock().expect("activity lock").insert(run_id.clone(), Activity::Running);
        let answers: Option<Arc<dyn AnswerProvider>> = human.then(|| {
            Arc::new(HumanChannel::new(
                self.questions.clone(),
                run_id.clone(),
                Duration::from_secs(self.layered.settings.answer_timeout_s),
            )) as Arc<dyn AnswerProvider>
        });
        let state = self.clone();
        let id = run_id.clone();
        tokio::spawn(async move {
            let result = state.pipeline.adapt(&run, &cases, answers).await;
            let mut activity = state.activity.lock().expect("activity lock");
            match result {
                Ok(_) => {
                    tracing::info!(run = %id, "run adapted");
                    activity.remove(&id);
                }
                Err(e) => {
                    tracing::error!(run = %id, error = %e, "run failed");
                    activity.insert(id.clone(), Activity::Failed(e.to_string()));
                }
            }
            drop(activity);
            if human {
                *state.human.lock().expect("human lock") = None;
            }
        });
        self.summary(self.store.open(&run_id)?.manifest()?)
    }

    pub async fn evaluate(&self, run_id: &str, force: bool) -> Result<MetricReport, ApiError> {
        if self.is_running(run_id) {
            return Err(ApiError::conflict(format!("run `{run_id}` is still running")));
        }
        let run: RunDir = self.store.open(run_id)?;
        Ok(self.pipeline.evaluate(&run, &self.cases(), force).await?)
    }
}
