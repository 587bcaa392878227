//! `snipadapt`: retrieve snippets, adapt them with a strategy, evaluate and
//! report runs, or serve the HTTP API. Commands run in-process unless
//! `--serve URL` points them at a running service.

mod local;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use snipadapt_client::{Client, ReportFormat};
use snipadapt_core::api::{CreateRunRequest, RunState};
use snipadapt_core::config::LayeredSettings;
use snipadapt_core::metrics::MetricReport;
use snipadapt_core::prompt::StrategyKind;
use snipadapt_server::AppState;

use local::Workspace;

const DEFAULT_CONFIG: &str = "snipadapt.toml";

#[derive(Parser)]
#[command(name = "snipadapt", version, about = "Adapt retrieved code snippets to their class context with an LLM")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Settings overrides; each wins over the environment and the config file.
#[derive(Args)]
struct Global {
    /// TOML config file [default: ./snipadapt.toml when present]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    benchmark: Option<String>,
    /// Snippet cache (JSONL)
    #[arg(long, global = true)]
    snippets: Option<String>,
    #[arg(long, global = true)]
    runs_dir: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Chat completions base URL
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true, value_parser = ["live", "record", "replay"])]
    mode: Option<String>,
    /// Transcript store for record and replay
    #[arg(long, global = true)]
    transcripts: Option<String>,
    /// Python interpreter for the test shim
    #[arg(long, global = true)]
    python: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Retrieve one snippet per case and write the snippet cache
    Retrieve {
        /// Comma-separated case ids [default: all]
        #[arg(long, value_delimiter = ',')]
        cases: Option<Vec<String>>,
        /// Output cache [default: the configured snippets path]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapt the cached snippets with a strategy into a new or resumed run
    Adapt {
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        samples: Option<u32>,
        #[arg(long)]
        max_tokens: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        cases: Option<Vec<String>>,
        /// Reuse an id to resume an interrupted run
        #[arg(long)]
        run_id: Option<String>,
        /// Service URL; required for the human strategy
        #[arg(long)]
        serve: Option<String>,
    },
    /// Run the tests of every adapted sample and write the report
    Evaluate {
        #[arg(long, required_unless_present = "canonical")]
        run: Option<String>,
        /// Re-execute even when evaluations are stored
        #[arg(long)]
        force: bool,
        /// Evaluate the canonical solutions instead of a run
        #[arg(long, conflicts_with = "run")]
        canonical: bool,
        #[arg(long, value_delimiter = ',', requires = "canonical")]
        cases: Option<Vec<String>>,
        #[arg(long)]
        serve: Option<String>,
    },
    /// Print the stored report of an evaluated run
    Report {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        serve: Option<String>,
    },
    /// List runs
    Runs {
        #[arg(long)]
        serve: Option<String>,
    },
    /// Serve the HTTP API and the review UI
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Initial,
    Enhanced,
    Human,
    Mac,
    Mae,
}

impl From<Strategy> for StrategyKind {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Initial => StrategyKind::Initial,
            Strategy::Enhanced => StrategyKind::Enhanced,
            Strategy::Human => StrategyKind::HumanLlm,
            Strategy::Mac => StrategyKind::Mac,
            Strategy::Mae => StrategyKind::Mae,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn settings(g: &Global) -> Result<LayeredSettings> {
    let file = g.config.clone().or_else(|| Path::new(DEFAULT_CONFIG).is_file().then(|| DEFAULT_CONFIG.into()));
    let mut l = LayeredSettings::load(file.as_deref())?;
    l.apply_env(|k| std::env::var(k).ok())?;
    let workers = g.workers.map(|w| w.to_string());
    let flags = [
        ("benchmark", &g.benchmark),
        ("snippets", &g.snippets),
        ("runs_dir", &g.runs_dir),
        ("provider.model", &g.model),
        ("provider.endpoint", &g.endpoint),
        ("mode", &g.mode),
        ("transcripts", &g.transcripts),
        ("python", &g.python),
        ("workers", &workers),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            l.set(key, v, "flag")?;
        }
    }
    Ok(l)
}

fn print_summary(report: &MetricReport) {
    let a = &report.aggregates;
    let p5 = a.mean_pass_at_5.map_or("n/a".to_string(), |p| format!("{p:.3}"));
    eprintln!(
        "{} cases: pass@1 {:.3}, pass@5 {p5}, CodeBLEU {:.3}; all-pass {}, some-pass {}, all-fail {}",
        a.cases, a.mean_pass_at_1, a.mean_codebleu, report.buckets.all_pass, report.buckets.some_pass, report.buckets.all_fail
    );
}

async fn run(cli: Cli) -> Result<()> {
    let layered = settings(&cli.global)?;
    match cli.command {
        Command::Retrieve { cases, out } => {
            let ws = Workspace::load(layered)?;
            let out = out.unwrap_or_else(|| ws.layered.settings.snippets.clone());
            local::retrieve(&ws, cases.as_deref(), &out).await
        }
        Command::Adapt {
            strategy,
            temperature,
            samples,
            max_tokens,
            cases,
            run_id,
            serve,
        } => {
            let req = CreateRunRequest {
                strategy: strategy.into(),
                run_id,
                temperature,
                samples,
                max_tokens,
                cases,
            };
            match serve {
                Some(url) => {
                    let client = Client::new(url);
                    let started = client.create_run(&req).await?;
                    let run_id = started.manifest.run_id;
                    eprintln!("started {run_id} on {}", client.base());
                    if req.strategy == StrategyKind::HumanLlm {
                        eprintln!("answer the model's questions at {}/", client.base());
                    }
                    let done = client.wait_for_run(&run_id, Duration::from_secs(1)).await?;
                    if done.state == RunState::Incomplete {
                        bail!("run `{run_id}` stopped after {} cases", done.cases_done);
                    }
                    println!("{run_id}");
                    Ok(())
                }
                None => {
                    let ws = Workspace::load(layered)?;
                    println!("{}", local::adapt(&ws, &req).await?);
                    Ok(())
                }
            }
        }
        Command::Evaluate {
            run,
            force,
            canonical,
            cases,
            serve,
        } => {
            if canonical {
                if serve.is_some() {
                    bail!("--canonical runs locally; drop --serve");
                }
                let ws = Workspace::load(layered)?;
                let report = local::evaluate_canonical(&ws, cases.as_deref()).await?;
                for c in &report.cases {
                    println!("{}\t{}/{} samples pass", c.case_id, c.c, c.n);
                }
                print_summary(&report);
                if report.buckets.all_pass != report.cases.len() {
                    bail!("some canonical solutions fail their tests");
                }
                return Ok(());
            }
            let run = run.expect("clap requires --run without --canonical");
            let report = match serve {
                Some(url) => Client::new(url).evaluate(&run, force).await?,
                None => local::evaluate(&Workspace::load(layered)?, &run, force).await?,
            };
            print_summary(&report);
            Ok(())
        }
        Command::Report { run, format, serve } => {
            let text = match serve {
                Some(url) => {
                    let f = match format {
                        Format::Json => ReportFormat::Json,
                        Format::Csv => ReportFormat::Csv,
                    };
                    Client::new(url).report(&run, f).await?
                }
                None => local::report(&Workspace::load(layered)?, &run, matches!(format, Format::Csv))?,
            };
            print!("{text}");
            Ok(())
        }
        Command::Runs { serve } => {
            let runs = match serve {
                Some(url) => Client::new(url).list_runs().await?.into_iter().map(|r| r.manifest).collect(),
                None => snipadapt_core::run::RunStore::new(layered.settings.runs_dir.clone()).list()?,
            };
            for m in runs {
                println!("{}\t{}\t{}\t{} cases", m.run_id, m.strategy.as_str(), m.model, m.case_ids.len());
            }
            Ok(())
        }
        Command::Serve { host, port } => {
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            let state = Arc::new(AppState::from_settings(layered).await?);
            eprintln!("serving on http://{addr}/");
            snipadapt_server::serve(state, addr).await?;
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { tracing::Level::INFO } else { tracing::Level::WARN };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
