//! The retrieve, adapt, evaluate and report stages over the run store.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{dedent, parse_source, tree_edit_distance, EDIT_MODEL_VERSION};
use crate::config::LayeredSettings;
use crate::conversation::Turn;
use crate::dataset::{attach_snippet, case_dependencies, AdaptationCase, DatasetError, SnippetEntry};
use crate::gateway::{Gateway, GatewayError, GatewayMode, OpenAiProvider, SamplingConfig};
use crate::harness::{assemble_program, shim_hash, ErrorCategory, Executor};
use crate::metrics::{build_report, codebleu, CaseEvaluation, CodeBleuWeights, MetricReport, SampleEvaluation};
use crate::orchestrator::{extract_code_block, AnswerProvider, CaseRecord, CounselorAgent, Orchestrator, OrchestratorError, SampleRecord, SampleStatus};
use crate::prompt::{PromptEngine, PromptError, StrategyKind};
use crate::run::{now_rfc3339, RunDir, RunError, RunManifest, RunRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("case {case_id}: replay miss for request {hash}")]
    ReplayMiss { case_id: String, hash: String },
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("no snippet for case `{0}`")]
    MissingSnippet(String),
    #[error("case `{0}` has no canonical solution")]
    MissingCanonical(String),
    #[error("run `{run_id}` is incomplete: {done} of {total} cases adapted")]
    Incomplete { run_id: String, done: usize, total: usize },
    #[error("run `{0}` has not been evaluated")]
    NotEvaluated(String),
    #[error("strategy `human` needs the interaction service; start it with `snipadapt serve` and pass `--serve URL`")]
    HumanNeedsService,
}

/// Keeps the cases named in `filter`, in benchmark order.
pub fn select_cases(cases: Vec<AdaptationCase>, filter: Option<&[String]>) -> Result<Vec<AdaptationCase>, PipelineError> {
    let Some(ids) = filter else {
        return Ok(cases);
    };
    let known: HashSet<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    if let Some(missing) = ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(PipelineError::UnknownCase(missing.clone()));
    }
    let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
    Ok(cases.into_iter().filter(|c| wanted.contains(c.case_id.as_str())).collect())
}

/// Attaches cached snippets; every case must have one.
/// Cases with cached snippets attached where one exists and validates;
/// the rest unchanged.
pub fn attach_available(cases: &[AdaptationCase], entries: &[SnippetEntry]) -> Vec<AdaptationCase> {
    let by_id: HashMap<&str, &str> = entries.iter().map(|e| (e.case_id.as_str(), e.snippet.as_str())).collect();
    cases
        .iter()
        .map(|c| {
            by_id
                .get(c.case_id.as_str())
                .and_then(|s| crate::dataset::attach_snippet(c, s).ok())
                .unwrap_or_else(|| c.clone())
        })
        .collect()
}

pub fn with_snippets(cases: &[AdaptationCase], entries: &[SnippetEntry]) -> Result<Vec<AdaptationCase>, PipelineError> {
    let by_id: HashMap<&str, &str> = entries.iter().map(|e| (e.case_id.as_str(), e.snippet.as_str())).collect();
    cases
        .iter()
        .map(|c| {
            let snippet = by_id.get(c.case_id.as_str()).ok_or_else(|| PipelineError::MissingSnippet(c.case_id.clone()))?;
            Ok(attach_snippet(c, snippet)?)
        })
        .collect()
}

/// Edit-script size between two method sources; `None` if either fails to
/// parse.
pub fn adaptation_size(from: &str, to: &str) -> Option<usize> {
    if from.trim().is_empty() || to.trim().is_empty() {
        return None;
    }
    let a = parse_source(&dedent(from)).ok()?;
    let b = parse_source(&dedent(to)).ok()?;
    Some(tree_edit_distance(&a, &b).size())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieveFailure {
    pub case_id: String,
    pub error: String,
}

/// Sidecar written next to a snippet cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieveOutcome {
    pub model: String,
    pub complete: bool,
    pub entries: Vec<SnippetEntry>,
    pub failed: Vec<RetrieveFailure>,
}

impl RetrieveOutcome {
    pub fn meta_path(cache: &Path) -> std::path::PathBuf {
        let mut name = cache.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        cache.with_file_name(name)
    }

    /// Writes the cache and its sidecar listing failed cases.
    pub fn write(&self, cache: &Path) -> Result<(), PipelineError> {
        crate::dataset::write_snippet_cache(cache, &self.entries)?;
        let meta = serde_json::json!({
            "model": self.model,
            "complete": self.complete,
            "entries": self.entries.len(),
            "failed": self.failed,
        });
        let path = Self::meta_path(cache);
        std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&meta).expect("json"))).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

pub struct Pipeline {
    orchestrator: Orchestrator,
    executor: Executor,
    weights: CodeBleuWeights,
    workers: usize,
}

/// Builds the gateway described by `settings`. Strict replay needs no
/// provider; every other mode gets the HTTP one.
pub async fn build_gateway(settings: &crate::config::Settings) -> Result<Gateway, GatewayError> {
    let mut b = Gateway::builder(settings.provider.model.clone(), settings.mode)
        .strict(settings.strict_replay)
        .retry(settings.retry.clone())
        .max_in_flight(settings.max_in_flight)
        .flatten_template(settings.provider.flatten_template.clone());
    if settings.mode != GatewayMode::Live {
        b = b.transcripts(settings.transcripts.clone());
    }
    if !(settings.mode == GatewayMode::Replay && settings.strict_replay) {
        let provider = OpenAiProvider::new(&settings.provider).map_err(|e| GatewayError::Provider { attempts: 0, source: e })?;
        b = b.provider(Arc::new(provider));
    }
    b.build().await
}

impl Pipeline {
    pub fn new(gateway: Arc<Gateway>, engine: Arc<PromptEngine>, executor: Executor, weights: CodeBleuWeights, workers: usize) -> Self {
        Pipeline {
            orchestrator: Orchestrator::new(gateway, engine),
            executor,
            weights,
            workers: workers.max(1),
        }
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    /// A manifest pinning every input of an adaptation run.
    #[allow(clippy::too_many_arguments)]
    pub fn manifest(
        &self,
        run_id: &str,
        strategy: StrategyKind,
        sampling: &SamplingConfig,
        layered: &LayeredSettings,
        cases: &[AdaptationCase],
        dataset_hash: String,
        snippets_hash: Option<String>,
    ) -> RunManifest {
        let s = &layered.settings;
        let gateway = self.orchestrator.gateway();
        RunManifest {
            run_id: run_id.to_string(),
            strategy,
            sampling: sampling.clone(),
            agent_sampling: matches!(strategy, StrategyKind::Mac | StrategyKind::Mae).then(|| sampling.with_n(1)),
            model: gateway.model().to_string(),
            endpoint: s.provider.endpoint.clone(),
            mode: gateway.mode(),
            strict_replay: s.strict_replay,
            transcripts: gateway.store().map(|st| st.path().display().to_string()),
            template_hashes: self.orchestrator.engine().templates().hashes(),
            dataset_hash,
            snippets_hash,
            shim_hash: shim_hash(),
            edit_model: EDIT_MODEL_VERSION.to_string(),
            limits: self.executor.limits().clone(),
            codebleu_weights: self.weights,
            case_ids: cases.iter().map(|c| c.case_id.clone()).collect(),
            config_sources: layered.sources.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_at: now_rfc3339(),
            completed_at: None,
        }
    }

    /// Asks the model for one snippet per case from the method name and
    /// description alone. A strict replay miss aborts; other failures are
    /// recorded per case.
    pub async fn retrieve(&self, cases: &[AdaptationCase]) -> Result<RetrieveOutcome, PipelineError> {
        let gateway = self.orchestrator.gateway().clone();
        let engine = self.orchestrator.engine().clone();
        let sampling = SamplingConfig::default().with_n(1);
        let results: Vec<(String, Result<String, String>)> = stream::iter(cases.iter().cloned())
            .map(|case| {
                let gateway = gateway.clone();
                let engine = engine.clone();
                let sampling = sampling.clone();
                async move {
                    let bundle = engine.render_prompt(StrategyKind::Retrieval, &case, None)?;
                    let mut convo = vec![Turn::system(bundle.system.clone())];
                    convo.extend(bundle.turns.iter().cloned());
                    let result = match gateway.complete(&convo, &sampling).await {
                        Ok(mut c) => {
                            let code = extract_code_block(&c.remove(0).content);
                            match attach_snippet(&case, &code) {
                                Ok(with) => Ok(with.retrieved_snippet),
                                Err(e) => Err(e.to_string()),
                            }
                        }
                        Err(GatewayError::ReplayMiss(hash)) => {
                            return Err(PipelineError::ReplayMiss {
                                case_id: case.case_id.clone(),
                                hash,
                            })
                        }
                        Err(e) => Err(e.to_string()),
                    };
                    Ok::<_, PipelineError>((case.case_id.clone(), result))
                }
            })
            .buffered(self.workers)
            .try_collect()
            .await?;
        let model = gateway.model().to_string();
        let mut out = RetrieveOutcome {
            model: model.clone(),
            complete: true,
            entries: Vec::new(),
            failed: Vec::new(),
        };
        for (case_id, r) in results {
            match r {
                Ok(snippet) => out.entries.push(SnippetEntry {
                    case_id,
                    snippet,
                    provenance: format!("model:{model}"),
                }),
                Err(error) => {
                    tracing::warn!(%case_id, %error, "retrieval failed");
                    out.complete = false;
                    out.failed.push(RetrieveFailure { case_id, error });
                }
            }
        }
        Ok(out)
    }

    /// Runs `strategy` over every case of the manifest that has no record
    /// yet, appending records in case order. Cases run concurrently except
    /// with an interactive answer provider.
    pub async fn adapt(
        &self,
        run: &RunDir,
        cases: &[AdaptationCase],
        answers: Option<Arc<dyn AnswerProvider>>,
    ) -> Result<Vec<CaseRecord>, PipelineError> {
        let mut manifest = run.manifest()?;
        let strategy = manifest.strategy;
        let answers: Option<Arc<dyn AnswerProvider>> = match (strategy, answers) {
            (StrategyKind::HumanLlm, None) => return Err(PipelineError::HumanNeedsService),
            (StrategyKind::Mac, None) => {
                let agent_sampling = manifest.agent_sampling.clone().unwrap_or_else(|| manifest.sampling.with_n(1));
                Some(Arc::new(CounselorAgent::new(
                    self.orchestrator.gateway().clone(),
                    self.orchestrator.engine().clone(),
                    agent_sampling,
                )))
            }
            (_, a) => a,
        };
        let by_id: HashMap<&str, &AdaptationCase> = cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
        let ordered: Vec<&AdaptationCase> = manifest
            .case_ids
            .iter()
            .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| PipelineError::UnknownCase(id.clone())))
            .collect::<Result<_, _>>()?;
        let done: HashSet<String> = run.records()?.into_iter().map(|r| r.record.case_id).collect();
        let pending: Vec<&AdaptationCase> = ordered.into_iter().filter(|c| !done.contains(&c.case_id)).collect();
        let workers = if answers.as_ref().is_some_and(|a| a.is_interactive()) { 1 } else { self.workers };
        let sampling = manifest.sampling.clone();

        // Indices rather than references keep the futures `Send` for spawning.
        let pending = &pending;
        let mut records = stream::iter(0..pending.len())
            .map(|i| {
                let case = pending[i];
                let answers = answers.clone();
                let sampling = sampling.clone();
                async move {
                    let deps = if strategy.is_enhanced_family() {
                        Some(case_dependencies(case)?.dependencies)
                    } else {
                        None
                    };
                    let rec = self.orchestrator.run_case(case, strategy, deps.as_ref(), answers.as_deref(), &sampling).await?;
                    Ok::<_, PipelineError>(rec)
                }
            })
            .buffered(workers);
        let mut written = Vec::new();
        while let Some(rec) = records.next().await {
            let rec = rec?;
            if let Some(hash) = rec.samples.iter().find_map(|s| s.replay_miss.clone()) {
                return Err(PipelineError::ReplayMiss { case_id: rec.case_id, hash });
            }
            run.append_record(&RunRecord {
                run_id: manifest.run_id.clone(),
                record: rec.clone(),
            })?;
            tracing::info!(case = %rec.case_id, "case adapted");
            written.push(rec);
        }
        manifest.completed_at = Some(now_rfc3339());
        run.write_manifest(&manifest)?;
        Ok(written)
    }

    /// Executes every sample of the run and writes the evaluations and the
    /// report. Evaluations already on disk are reused unless `force`.
    pub async fn evaluate(&self, run: &RunDir, cases: &[AdaptationCase], force: bool) -> Result<MetricReport, PipelineError> {
        let manifest = run.manifest()?;
        let records = run.records()?;
        if records.len() < manifest.case_ids.len() {
            return Err(PipelineError::Incomplete {
                run_id: manifest.run_id,
                done: records.len(),
                total: manifest.case_ids.len(),
            });
        }
        let cached = if force { None } else { run.evaluations()? };
        let evaluations = match cached {
            Some(e) if e.len() == records.len() && e.iter().zip(&records).all(|(e, r)| e.case_id == r.record.case_id) => e,
            _ => {
                let records: Vec<CaseRecord> = records.into_iter().map(|r| r.record).collect();
                let e = self.evaluate_records(&records, cases).await?;
                run.write_evaluations(&e)?;
                e
            }
        };
        let report = build_report(&evaluations, manifest.codebleu_weights);
        run.write_report(&report)?;
        Ok(report)
    }

    /// Scores records against the canonical solutions without touching the
    /// run store.
    pub async fn evaluate_records(&self, records: &[CaseRecord], cases: &[AdaptationCase]) -> Result<Vec<CaseEvaluation>, PipelineError> {
        let by_id: HashMap<&str, &AdaptationCase> = cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
        let jobs: Vec<(&CaseRecord, &AdaptationCase)> = records
            .iter()
            .map(|r| {
                let case = by_id.get(r.case_id.as_str()).copied().ok_or_else(|| PipelineError::UnknownCase(r.case_id.clone()))?;
                if case.canonical_solution.trim().is_empty() {
                    return Err(PipelineError::MissingCanonical(case.case_id.clone()));
                }
                Ok((r, case))
            })
            .collect::<Result<_, _>>()?;
        let jobs = &jobs;
        let out = stream::iter(0..jobs.len())
            .map(|i| self.evaluate_case(jobs[i].0, jobs[i].1))
            .buffered(self.workers)
            .collect()
            .await;
        Ok(out)
    }

    async fn evaluate_case(&self, record: &CaseRecord, case: &AdaptationCase) -> CaseEvaluation {
        let samples = futures::future::join_all(record.samples.iter().map(|s| self.evaluate_sample(s, case))).await;
        CaseEvaluation {
            case_id: record.case_id.clone(),
            strategy: record.strategy,
            samples,
            required_size: adaptation_size(&case.retrieved_snippet, &case.canonical_solution),
        }
    }

    async fn evaluate_sample(&self, sample: &SampleRecord, case: &AdaptationCase) -> SampleEvaluation {
        let mut eval = SampleEvaluation {
            index: sample.index,
            code: sample.code.clone(),
            passed: false,
            outcome: None,
            assembly_error: None,
            codebleu: Some(codebleu(&dedent(&sample.code), &dedent(&case.canonical_solution), &self.weights)),
            actual_size: adaptation_size(&case.retrieved_snippet, &sample.code),
        };
        match assemble_program(case, &sample.code) {
            Ok(program) => {
                let outcome = self.executor.run_tests(&program, &case.test_source).await;
                eval.passed = outcome.passed();
                eval.outcome = Some(outcome);
            }
            Err(e) => eval.assembly_error = Some((e.category(), e.to_string())),
        }
        eval
    }
}

/// Records whose every sample is the canonical solution, used to check
/// that the benchmark and the harness agree.
pub fn canonical_records(cases: &[AdaptationCase], n: usize) -> Vec<CaseRecord> {
    cases
        .iter()
        .map(|c| CaseRecord {
            case_id: c.case_id.clone(),
            strategy: StrategyKind::Generation,
            sampling: SamplingConfig::default().with_n(n as u32),
            samples: (0..n)
                .map(|i| SampleRecord {
                    index: i,
                    conversation: Vec::new(),
                    questions: Vec::new(),
                    answers: Vec::new(),
                    code: c.canonical_solution.clone(),
                    status: SampleStatus::Done,
                    failure: None,
                    agent_conversation: None,
                    first_code: None,
                    evaluation_skipped: false,
                    replay_miss: None,
                    transitions: Vec::new(),
                    timings: Default::default(),
                })
                .collect(),
        })
        .collect()
}

/// Error counts per category over a set of evaluations, keyed by name.
pub fn error_counts(evaluations: &[CaseEvaluation]) -> BTreeMap<ErrorCategory, usize> {
    crate::metrics::error_distribution(evaluations.iter().flat_map(|c| c.samples.iter().flat_map(|s| s.error_categories())))
}
