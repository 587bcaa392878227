//! Settings shared by the CLI and the service. Values come from a TOML
//! file, then environment variables, then command-line flags, each layer
//! overriding the previous one; the winning source of every key is kept.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayMode, ProviderConfig, RetryPolicy};
use crate::harness::Limits;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub benchmark: PathBuf,
    pub snippets: PathBuf,
    pub runs_dir: PathBuf,
    pub transcripts: PathBuf,
    pub mode: GatewayMode,
    pub strict_replay: bool,
    pub provider: ProviderConfig,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub python: String,
    pub limits: Limits,
    pub workers: usize,
    /// How long a human has to answer a question group.
    pub answer_timeout_s: u64,
    /// Built review UI served by the service, when present.
    pub ui_dir: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            benchmark: "fixtures/benchmark.json".into(),
            snippets: "fixtures/snippets.jsonl".into(),
            runs_dir: "runs".into(),
            transcripts: "fixtures/transcripts.jsonl".into(),
            mode: GatewayMode::Replay,
            strict_replay: true,
            provider: ProviderConfig::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
            python: "python3".into(),
            limits: Limits::default(),
            workers: 4,
            answer_timeout_s: 3600,
            ui_dir: "ui/dist".into(),
        }
    }
}

/// Environment variables consulted, with the key each one sets.
pub const ENV_KEYS: &[(&str, &str)] = &[
    ("SNIPADAPT_BENCHMARK", "benchmark"),
    ("SNIPADAPT_SNIPPETS", "snippets"),
    ("SNIPADAPT_RUNS_DIR", "runs_dir"),
    ("SNIPADAPT_TRANSCRIPTS", "transcripts"),
    ("SNIPADAPT_MODE", "mode"),
    ("SNIPADAPT_ENDPOINT", "provider.endpoint"),
    ("SNIPADAPT_MODEL", "provider.model"),
    ("SNIPADAPT_AUTH_ENV", "provider.auth_env"),
    ("SNIPADAPT_PYTHON", "python"),
    ("SNIPADAPT_WORKERS", "workers"),
];

#[derive(Debug, Clone, Default)]
pub struct LayeredSettings {
    pub settings: Settings,
    /// key -> "default" | "file" | "env" | "flag".
    pub sources: BTreeMap<String, String>,
}

impl LayeredSettings {
    /// Defaults, overlaid by `file` when given.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let mut out = LayeredSettings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let table: toml::Table = toml::from_str(&text).map_err(|e| ConfigError::Read {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            out.settings = toml::from_str(&text).map_err(|e| ConfigError::Read {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            for (k, v) in &table {
                match v.as_table() {
                    Some(inner) => {
                        for sub in inner.keys() {
                            out.sources.insert(format!("{k}.{sub}"), "file".into());
                        }
                    }
                    None => {
                        out.sources.insert(k.clone(), "file".into());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        for (var, key) in ENV_KEYS {
            if let Some(v) = lookup(var).filter(|v| !v.is_empty()) {
                self.set(key, &v, "env")?;
            }
        }
        Ok(())
    }

    /// Sets one key from its string form.
    pub fn set(&mut self, key: &str, value: &str, source: &str) -> Result<(), ConfigError> {
        let s = &mut self.settings;
        let invalid = |m: String| ConfigError::Invalid {
            key: key.to_string(),
            message: m,
        };
        match key {
            "benchmark" => s.benchmark = value.into(),
            "snippets" => s.snippets = value.into(),
            "runs_dir" => s.runs_dir = value.into(),
            "transcripts" => s.transcripts = value.into(),
            "mode" => s.mode = value.parse().map_err(invalid)?,
            "provider.endpoint" => s.provider.endpoint = value.into(),
            "provider.model" => s.provider.model = value.into(),
            "provider.auth_env" => s.provider.auth_env = value.into(),
            "python" => s.python = value.into(),
            "ui_dir" => s.ui_dir = value.into(),
            "workers" => s.workers = value.parse().map_err(|e: std::num::ParseIntError| invalid(e.to_string()))?,
            "limits.timeout_s" => s.limits.timeout_s = value.parse().map_err(|e: std::num::ParseFloatError| invalid(e.to_string()))?,
            "limits.memory_mb" => s.limits.memory_mb = value.parse().map_err(|e: std::num::ParseIntError| invalid(e.to_string()))?,
            other => return Err(invalid(format!("unknown key `{other}`"))),
        }
        self.sources.insert(key.to_string(), source.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_over_env_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "python = \"py-file\"\nworkers = 2\n[provider]\nmodel = \"file-model\"\n").unwrap();
        let mut l = LayeredSettings::load(Some(&path)).unwrap();
        assert_eq!(l.settings.provider.model, "file-model");
        assert_eq!(l.settings.provider.endpoint, ProviderConfig::default().endpoint);
        l.apply_env(|k| match k {
            "SNIPADAPT_MODEL" => Some("env-model".into()),
            "SNIPADAPT_PYTHON" => Some("py-env".into()),
            _ => None,
        })
        .unwrap();
        l.set("python", "py-flag", "flag").unwrap();
        assert_eq!(l.settings.python, "py-flag");
        assert_eq!(l.settings.provider.model, "env-model");
        assert_eq!(l.settings.workers, 2);
        assert_eq!(l.sources["python"], "flag");
        assert_eq!(l.sources["provider.model"], "env");
        assert_eq!(l.sources["workers"], "file");
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut l = LayeredSettings::default();
        assert!(l.set("mode", "sideways", "flag").is_err());
        assert!(l.set("nope", "1", "flag").is_err());
    }
}
