//! Run manifests and the on-disk run store.
//!
//! A run directory holds `manifest.json`, `records.jsonl` (one line per
//! completed case, in case order), and after evaluation `evaluated.jsonl`,
//! `report.json` and `report.csv`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{GatewayMode, SamplingConfig};
use crate::harness::Limits;
use crate::metrics::{CaseEvaluation, CodeBleuWeights, MetricReport};
use crate::orchestrator::CaseRecord;
use crate::prompt::StrategyKind;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const EVALUATED_FILE: &str = "evaluated.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Decode { path: String, line: usize, message: String },
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("run `{0}` already exists with a different manifest")]
    ManifestMismatch(String),
    #[error("invalid run id `{0}`")]
    InvalidRunId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String, RunError> {
    std::fs::read(path).map(|b| sha256_hex(&b)).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub strategy: StrategyKind,
    pub sampling: SamplingConfig,
    /// Sampling of the counselor (MAC) or evaluator (MAE) agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_sampling: Option<SamplingConfig>,
    pub model: String,
    pub endpoint: String,
    pub mode: GatewayMode,
    pub strict_replay: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<String>,
    pub template_hashes: BTreeMap<String, String>,
    pub dataset_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippets_hash: Option<String>,
    pub shim_hash: String,
    pub edit_model: String,
    pub limits: Limits,
    pub codebleu_weights: CodeBleuWeights,
    pub case_ids: Vec<String>,
    /// Where each configuration key came from: default, file, env or flag.
    #[serde(default)]
    pub config_sources: BTreeMap<String, String>,
    pub tool_version: String,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<String>,
}

impl RunManifest {
    /// True when both manifests pin the same behavior, ignoring timestamps
    /// and config provenance.
    pub fn same_inputs(&self, other: &RunManifest) -> bool {
        let strip = |m: &RunManifest| {
            let mut m = m.clone();
            m.created_at.clear();
            m.completed_at = None;
            m.config_sources.clear();
            m
        };
        strip(self) == strip(other)
    }
}

/// Line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    #[serde(flatten)]
    pub record: CaseRecord,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::Decode {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.')
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates the run, or reopens it when a run with the same inputs
    /// already exists so it can be resumed.
    pub fn create(&self, manifest: &RunManifest) -> Result<RunDir, RunError> {
        if !valid_run_id(&manifest.run_id) {
            return Err(RunError::InvalidRunId(manifest.run_id.clone()));
        }
        let dir = RunDir {
            path: self.root.join(&manifest.run_id),
        };
        if dir.path.join(MANIFEST_FILE).exists() {
            let existing = dir.manifest()?;
            if !existing.same_inputs(manifest) {
                return Err(RunError::ManifestMismatch(manifest.run_id.clone()));
            }
            return Ok(dir);
        }
        std::fs::create_dir_all(&dir.path).map_err(io_err(&dir.path))?;
        dir.write_manifest(manifest)?;
        Ok(dir)
    }

    /// An unused id of the form `{prefix}-{timestamp}`.
    pub fn fresh_id(&self, prefix: &str) -> String {
        let stamp: String = now_rfc3339().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        let base = format!("{prefix}-{stamp}");
        let mut id = base.clone();
        let mut n = 1;
        while self.root.join(&id).exists() {
            n += 1;
            id = format!("{base}-{n}");
        }
        id
    }

    pub fn open(&self, run_id: &str) -> Result<RunDir, RunError> {
        if !valid_run_id(run_id) {
            return Err(RunError::InvalidRunId(run_id.to_string()));
        }
        let path = self.root.join(run_id);
        if !path.join(MANIFEST_FILE).is_file() {
            return Err(RunError::UnknownRun(run_id.to_string()));
        }
        Ok(RunDir { path })
    }

    /// Manifests of all runs, ordered by run id.
    pub fn list(&self) -> Result<Vec<RunManifest>, RunError> {
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root)(e)),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            let manifest = entry.path().join(MANIFEST_FILE);
            if manifest.is_file() {
                out.push(RunDir { path: entry.path() }.manifest()?);
            }
        }
        out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn at(path: impl Into<PathBuf>) -> Self {
        RunDir { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn manifest(&self) -> Result<RunManifest, RunError> {
        let p = self.path.join(MANIFEST_FILE);
        let bytes = std::fs::read(&p).map_err(io_err(&p))?;
        serde_json::from_slice(&bytes).map_err(|e| RunError::Decode {
            path: p.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write_manifest(&self, m: &RunManifest) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.path.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Completed case records; empty before the first case finishes.
    pub fn records(&self) -> Result<Vec<RunRecord>, RunError> {
        let p = self.path.join(RECORDS_FILE);
        if !p.exists() {
            return Ok(Vec::new());
        }
        read_jsonl(&p)
    }

    pub fn append_record(&self, record: &RunRecord) -> Result<(), RunError> {
        let p = self.path.join(RECORDS_FILE);
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&p).map_err(io_err(&p))?;
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err(&p))?;
        f.sync_data().map_err(io_err(&p))
    }

    pub fn evaluations(&self) -> Result<Option<Vec<CaseEvaluation>>, RunError> {
        let p = self.path.join(EVALUATED_FILE);
        if !p.exists() {
            return Ok(None);
        }
        read_jsonl(&p).map(Some)
    }

    pub fn write_evaluations(&self, cases: &[CaseEvaluation]) -> Result<(), RunError> {
        let mut text = String::new();
        for c in cases {
            text.push_str(&serde_json::to_string(c).expect("evaluation serializes"));
            text.push('\n');
        }
        write_atomic(&self.path.join(EVALUATED_FILE), text.as_bytes())
    }

    pub fn report(&self) -> Result<Option<MetricReport>, RunError> {
        let p = self.path.join(REPORT_FILE);
        if !p.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&p).map_err(io_err(&p))?;
        serde_json::from_slice(&bytes).map(Some).map_err(|e| RunError::Decode {
            path: p.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// The stored report file as written, `csv` or JSON.
    pub fn report_text(&self, csv: bool) -> Result<Option<String>, RunError> {
        let p = self.path.join(if csv { REPORT_CSV_FILE } else { REPORT_FILE });
        if !p.exists() {
            return Ok(None);
        }
        std::fs::read_to_string(&p).map(Some).map_err(io_err(&p))
    }

    pub fn write_report(&self, report: &MetricReport) -> Result<(), RunError> {
        write_atomic(&self.path.join(REPORT_FILE), report.to_json().as_bytes())?;
        let csv = report.to_csv().map_err(|e| RunError::Io {
            path: REPORT_CSV_FILE.into(),
            source: std::io::Error::other(e),
        })?;
        write_atomic(&self.path.join(REPORT_CSV_FILE), csv.as_bytes())
    }
}
