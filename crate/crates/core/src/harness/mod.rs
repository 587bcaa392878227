//! Assembly of adapted methods into their class and isolated execution of
//! the test suite through the bundled Python shim.

mod assemble;

use std::fmt;
use std::process::Stdio;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::process::Command;
use tokio::sync::Semaphore;

pub use assemble::{assemble_program, AssemblyError};

/// Source of the test shim run inside each child interpreter.
pub const SHIM_SOURCE: &str = include_str!("../../shim/shim.py");

const ENV_ALLOWLIST: &[&str] = &["PATH", "LANG", "LC_ALL", "SYSTEMROOT"];

pub fn shim_hash() -> String {
    hex::encode(Sha256::digest(SHIM_SOURCE.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    AssertionError,
    NameError,
    TypeError,
    AttributeError,
    ValueError,
    KeyError,
    IndexError,
    SyntaxError,
    Timeout,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 10] = [
        ErrorCategory::AssertionError,
        ErrorCategory::NameError,
        ErrorCategory::TypeError,
        ErrorCategory::AttributeError,
        ErrorCategory::ValueError,
        ErrorCategory::KeyError,
        ErrorCategory::IndexError,
        ErrorCategory::SyntaxError,
        ErrorCategory::Timeout,
        ErrorCategory::Other,
    ];

    /// Maps an unqualified exception class name. Subclasses the interpreter
    /// raises for the listed kinds map to their base.
    pub fn from_exception(name: &str) -> ErrorCategory {
        match name {
            "AssertionError" => ErrorCategory::AssertionError,
            "NameError" | "UnboundLocalError" => ErrorCategory::NameError,
            "TypeError" => ErrorCategory::TypeError,
            "AttributeError" => ErrorCategory::AttributeError,
            "ValueError" | "UnicodeDecodeError" | "UnicodeEncodeError" => ErrorCategory::ValueError,
            "KeyError" => ErrorCategory::KeyError,
            "IndexError" => ErrorCategory::IndexError,
            "SyntaxError" | "IndentationError" | "TabError" => ErrorCategory::SyntaxError,
            "Timeout" => ErrorCategory::Timeout,
            _ => ErrorCategory::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::AssertionError => "AssertionError",
            ErrorCategory::NameError => "NameError",
            ErrorCategory::TypeError => "TypeError",
            ErrorCategory::AttributeError => "AttributeError",
            ErrorCategory::ValueError => "ValueError",
            ErrorCategory::KeyError => "KeyError",
            ErrorCategory::IndexError => "IndexError",
            ErrorCategory::SyntaxError => "SyntaxError",
            ErrorCategory::Timeout => "Timeout",
            ErrorCategory::Other => "Other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_category: Option<ErrorCategory>,
    /// Exception class name as reported by the interpreter.
    #[serde(default)]
    pub error_type: String,
    #[serde(default)]
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStatus {
    AllPass,
    SomeFail,
    Crash,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashInfo {
    pub category: ErrorCategory,
    pub error_type: String,
    pub message: String,
    /// Raw child output on protocol violations.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub per_test: Vec<TestResult>,
    pub suite_status: SuiteStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash: Option<CrashInfo>,
    pub wall_ms: u64,
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        self.suite_status == SuiteStatus::AllPass
    }

    /// One entry per recorded error instance: each failing test, or the
    /// single crash/timeout cause.
    pub fn error_categories(&self) -> Vec<ErrorCategory> {
        match self.suite_status {
            SuiteStatus::AllPass => Vec::new(),
            SuiteStatus::Timeout => vec![ErrorCategory::Timeout],
            SuiteStatus::Crash => vec![self.crash.as_ref().map_or(ErrorCategory::Other, |c| c.category)],
            SuiteStatus::SomeFail => self
                .per_test
                .iter()
                .filter(|t| t.status != TestStatus::Pass)
                .map(|t| t.error_category.unwrap_or(ErrorCategory::Other))
                .collect(),
        }
    }

    pub fn crash(category: ErrorCategory, error_type: &str, message: impl Into<String>, raw: String, wall_ms: u64) -> Self {
        TestOutcome {
            per_test: Vec::new(),
            suite_status: SuiteStatus::Crash,
            crash: Some(CrashInfo {
                category,
                error_type: error_type.to_string(),
                message: message.into(),
                raw_output: raw,
            }),
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub timeout_s: f64,
    pub memory_mb: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_test_timeout_s: Option<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout_s: 10.0,
            memory_mb: 512,
            per_test_timeout_s: None,
        }
    }
}

#[derive(Deserialize)]
struct ShimReport {
    results: Vec<ShimResult>,
    #[serde(default)]
    fatal: Option<ShimFatal>,
}

#[derive(Deserialize)]
struct ShimResult {
    name: String,
    status: TestStatus,
    #[serde(default)]
    error_type: String,
    #[serde(default)]
    message: String,
}

#[derive(Deserialize)]
struct ShimFatal {
    error_type: String,
    #[serde(default)]
    message: String,
}

fn outcome_from_report(report: ShimReport, wall_ms: u64) -> TestOutcome {
    if let Some(f) = report.fatal {
        return TestOutcome::crash(ErrorCategory::from_exception(&f.error_type), &f.error_type, f.message, String::new(), wall_ms);
    }
    if report.results.is_empty() {
        return TestOutcome::crash(ErrorCategory::Other, "", "no tests discovered", String::new(), wall_ms);
    }
    let per_test: Vec<TestResult> = report
        .results
        .into_iter()
        .map(|r| TestResult {
            error_category: (r.status != TestStatus::Pass).then(|| ErrorCategory::from_exception(&r.error_type)),
            name: r.name,
            status: r.status,
            error_type: r.error_type,
            message: r.message,
        })
        .collect();
    let suite_status = if per_test.iter().all(|t| t.status == TestStatus::Pass) {
        SuiteStatus::AllPass
    } else {
        SuiteStatus::SomeFail
    };
    TestOutcome {
        per_test,
        suite_status,
        crash: None,
        wall_ms,
    }
}

/// Runs test suites in fresh interpreter processes, at most `workers` at a
/// time.
#[derive(Clone)]
pub struct Executor {
    python: String,
    limits: Limits,
    permits: Arc<Semaphore>,
}

impl Executor {
    pub fn new(python: impl Into<String>, limits: Limits, workers: usize) -> Self {
        Executor {
            python: python.into(),
            limits,
            permits: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn python(&self) -> &str {
        &self.python
    }

    pub async fn run_tests(&self, program: &str, test_source: &str) -> TestOutcome {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        run_tests(&self.python, program, test_source, &self.limits).await
    }
}

/// Executes `test_source` against `program` in a new interpreter with a
/// private temp dir, a stripped environment and resource limits.
pub async fn run_tests(python: &str, program: &str, test_source: &str, limits: &Limits) -> TestOutcome {
    let started = Instant::now();
    let elapsed = || started.elapsed().as_millis() as u64;
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return TestOutcome::crash(ErrorCategory::Other, "", format!("temp dir: {e}"), String::new(), elapsed()),
    };
    let shim = dir.path().join("shim.py");
    if let Err(e) = tokio::fs::write(&shim, SHIM_SOURCE).await {
        return TestOutcome::crash(ErrorCategory::Other, "", format!("writing shim: {e}"), String::new(), elapsed());
    }
    let mut cmd = Command::new(python);
    cmd.arg("-I")
        .arg("-B")
        .arg(&shim)
        .current_dir(dir.path())
        .env_clear()
        .env("HOME", dir.path())
        .env("TMPDIR", dir.path())
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONIOENCODING", "utf-8")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true);
    for key in ENV_ALLOWLIST {
        if let Ok(v) = std::env::var(key) {
            cmd.env(key, v);
        }
    }
    let memory = limits.memory_mb.saturating_mul(1024 * 1024);
    #[cfg(unix)]
    unsafe {
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            if memory > 0 {
                let lim = libc::rlimit {
                    rlim_cur: memory as libc::rlim_t,
                    rlim_max: memory as libc::rlim_t,
                };
                libc::setrlimit(libc::RLIMIT_AS, &lim);
            }
            Ok(())
        });
    }
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return TestOutcome::crash(ErrorCategory::Other, "", format!("spawning {python}: {e}"), String::new(), elapsed()),
    };
    let request = serde_json::json!({
        "source": program,
        "test_source": test_source,
        "per_test_timeout_s": limits.per_test_timeout_s,
    })
    .to_string();
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let io = async {
        let write = async {
            let _ = stdin.write_all(request.as_bytes()).await;
            drop(stdin);
        };
        let mut out = Vec::new();
        let mut err = Vec::new();
        let (_, _, _) = tokio::join!(write, stdout.read_to_end(&mut out), stderr.read_to_end(&mut err));
        let status = child.wait().await;
        (out, err, status)
    };
    let timeout = Duration::from_secs_f64(limits.timeout_s.max(0.001));
    let (out, err, status) = match tokio::time::timeout(timeout, io).await {
        Ok(r) => r,
        Err(_) => {
            #[cfg(unix)]
            if let Some(pid) = child.id() {
                // SAFETY: signalling the child's own process group.
                unsafe {
                    libc::kill(-(pid as i32), libc::SIGKILL);
                }
            }
            let _ = child.kill().await;
            return TestOutcome {
                per_test: Vec::new(),
                suite_status: SuiteStatus::Timeout,
                crash: None,
                wall_ms: elapsed(),
            };
        }
    };
    let wall_ms = elapsed();
    let raw = || {
        format!(
            "stdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out),
            String::from_utf8_lossy(&err)
        )
    };
    let code = status.ok().and_then(|s| s.code());
    if code != Some(0) {
        let category = if String::from_utf8_lossy(&err).contains("MemoryError") {
            "MemoryError"
        } else {
            ""
        };
        return TestOutcome::crash(ErrorCategory::Other, category, format!("shim exited with {code:?}"), raw(), wall_ms);
    }
    match serde_json::from_slice::<ShimReport>(&out) {
        Ok(report) => outcome_from_report(report, wall_ms),
        Err(e) => TestOutcome::crash(ErrorCategory::Other, "", format!("shim protocol violation: {e}"), raw(), wall_ms),
    }
}
