//! Commands run in-process against the run store.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use snipadapt_core::api::CreateRunRequest;
use snipadapt_core::config::LayeredSettings;
use snipadapt_core::dataset::{derive_all, load_benchmark, read_snippet_cache, AdaptationCase, LoadMode, SnippetEntry};
use snipadapt_core::harness::Executor;
use snipadapt_core::metrics::{build_report, CodeBleuWeights, MetricReport};
use snipadapt_core::pipeline::{attach_available, build_gateway, canonical_records, select_cases, with_snippets, Pipeline};
use snipadapt_core::prompt::{PromptEngine, StrategyKind};
use snipadapt_core::run::{file_hash, RunStore};

pub struct Workspace {
    pub layered: LayeredSettings,
    pub cases: Vec<AdaptationCase>,
    pub snippets: Vec<SnippetEntry>,
    pub dataset_hash: String,
    pub snippets_hash: Option<String>,
    pub store: RunStore,
}

impl Workspace {
    pub fn load(layered: LayeredSettings) -> Result<Self> {
        let s = &layered.settings;
        let bench = load_benchmark(&s.benchmark, LoadMode::Strict).with_context(|| format!("loading {}", s.benchmark.display()))?;
        let cases = derive_all(&bench.units)?;
        let dataset_hash = file_hash(&s.benchmark)?;
        let (snippets, snippets_hash) = if s.snippets.is_file() {
            (read_snippet_cache(&s.snippets)?, Some(file_hash(&s.snippets)?))
        } else {
            (Vec::new(), None)
        };
        Ok(Workspace {
            store: RunStore::new(s.runs_dir.clone()),
            layered,
            cases,
            snippets,
            dataset_hash,
            snippets_hash,
        })
    }

    pub async fn pipeline(&self) -> Result<Pipeline> {
        let s = &self.layered.settings;
        let gateway = build_gateway(s).await?;
        Ok(Pipeline::new(
            Arc::new(gateway),
            Arc::new(PromptEngine::default()),
            Executor::new(s.python.clone(), s.limits.clone(), s.workers),
            CodeBleuWeights::default(),
            s.workers,
        ))
    }

    pub fn select(&self, ids: Option<&[String]>) -> Result<Vec<AdaptationCase>> {
        Ok(select_cases(self.cases.clone(), ids)?)
    }
}

/// Retrieves a snippet per case and writes the cache; fails when any case
/// has none.
pub async fn retrieve(ws: &Workspace, ids: Option<&[String]>, out: &std::path::Path) -> Result<()> {
    let cases = ws.select(ids)?;
    let outcome = ws.pipeline().await?.retrieve(&cases).await?;
    outcome.write(out)?;
    eprintln!("wrote {} snippets to {}", outcome.entries.len(), out.display());
    for f in &outcome.failed {
        eprintln!("  {}: {}", f.case_id, f.error);
    }
    if !outcome.complete {
        bail!("{} of {} cases have no snippet", outcome.failed.len(), cases.len());
    }
    Ok(())
}

/// Creates or resumes a run and adapts every pending case. Returns the run id.
pub async fn adapt(ws: &Workspace, req: &CreateRunRequest) -> Result<String> {
    let sampling = req.sampling()?;
    if req.strategy == StrategyKind::HumanLlm {
        return Err(snipadapt_core::pipeline::PipelineError::HumanNeedsService.into());
    }
    let selected = ws.select(req.cases.as_deref())?;
    let cases = if req.strategy.needs_snippet() {
        with_snippets(&selected, &ws.snippets)?
    } else {
        selected
    };
    let run_id = req.run_id.clone().unwrap_or_else(|| ws.store.fresh_id(req.strategy.as_str()));
    let pipeline = ws.pipeline().await?;
    let manifest = pipeline.manifest(
        &run_id,
        req.strategy,
        &sampling,
        &ws.layered,
        &cases,
        ws.dataset_hash.clone(),
        ws.snippets_hash.clone(),
    );
    let run = ws.store.create(&manifest)?;
    let done = run.records()?.len();
    if done > 0 {
        eprintln!("resuming {run_id}: {done} of {} cases already adapted", cases.len());
    }
    pipeline.adapt(&run, &cases, None).await?;
    Ok(run_id)
}

pub async fn evaluate(ws: &Workspace, run_id: &str, force: bool) -> Result<MetricReport> {
    let run = ws.store.open(run_id)?;
    let cases = attach_available(&ws.cases, &ws.snippets);
    Ok(ws.pipeline().await?.evaluate(&run, &cases, force).await?)
}

/// Runs every selected case's canonical solution through its tests.
pub async fn evaluate_canonical(ws: &Workspace, ids: Option<&[String]>) -> Result<MetricReport> {
    let cases = attach_available(&ws.select(ids)?, &ws.snippets);
    let evaluations = ws.pipeline().await?.evaluate_records(&canonical_records(&cases, 1), &cases).await?;
    Ok(build_report(&evaluations, CodeBleuWeights::default()))
}

/// The stored report text, byte for byte.
pub fn report(ws: &Workspace, run_id: &str, csv: bool) -> Result<String> {
    let run = ws.store.open(run_id)?;
    match run.report_text(csv)? {
        Some(r) => Ok(r),
        None => bail!("run `{run_id}` has not been evaluated; run `snipadapt evaluate --run {run_id}` first"),
    }
}
