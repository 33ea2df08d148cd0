//! Argument parsing and dispatch for the `webagg` binary.

pub mod demo;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use webagg_core::eval::EvalReport;
use webagg_core::pipeline::outputs::EVAL_REPORT;
use webagg_core::pipeline::{
    BackendChoice, Pipeline, PipelineConfig, PipelineError, RunOptions, Stage, StageOutcome,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "webagg", version, about = "Build and evaluate web aggregation question sets")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, default_value = "webagg.toml")]
    pub config: PathBuf,
    /// Override the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the number of worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Continue a stage from its manifest; fails if settings changed.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Use this fixture directory instead of the configured page source.
    #[arg(long, global = true)]
    pub fixture: Option<PathBuf>,
    /// `live` or `scripted:<path>`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Process at most this many pending items.
    #[arg(long, global = true, hide = true)]
    pub limit: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the configured queries and label anchor pages by domain.
    Anchors,
    /// Explore from each anchor and draft question-answer candidates.
    Synthesize,
    /// Filter, verify and balance candidates into the dataset.
    Qc,
    /// Solve dataset tasks repeatedly and judge the answers.
    Sample,
    /// Keep clean, correct attempts and write loss-masked training records.
    ExportSft,
    /// Score an agent with pass@k on the dataset.
    Eval,
    /// Summarize the dataset's domains, operations and levels.
    Analyze,
    /// Run every stage in order.
    All,
    /// Write the offline demo world, script and configuration.
    DemoInit {
        /// Target directory.
        dir: PathBuf,
    },
}

impl Command {
    fn stages(&self) -> Vec<Stage> {
        match self {
            Command::Anchors => vec![Stage::Anchors],
            Command::Synthesize => vec![Stage::Synthesize],
            Command::Qc => vec![Stage::Qc],
            Command::Sample => vec![Stage::Sample],
            Command::ExportSft => vec![Stage::ExportSft],
            Command::Eval => vec![Stage::Eval],
            Command::Analyze => vec![Stage::Analyze],
            Command::All => Stage::ALL.to_vec(),
            Command::DemoInit { .. } => Vec::new(),
        }
    }
}

/// Applies command-line overrides on top of the loaded configuration.
pub fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(f) = &cli.fixture {
        cfg.web.fixture = Some(f.clone());
    }
    if let Some(b) = &cli.backend {
        cfg.backend = BackendChoice::from_flag(b)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summary(outcome: &StageOutcome) -> String {
    let m = &outcome.manifest;
    let counts: Vec<String> = m.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let state = if m.complete { "complete" } else { "incomplete" };
    format!(
        "{}: {state}, {} item(s) processed{}{}",
        m.stage,
        outcome.processed,
        if counts.is_empty() { "" } else { "; " },
        counts.join(" ")
    )
}

fn run_stages(cli: &Cli) -> Result<(), PipelineError> {
    let pipeline = Pipeline::new(load_config(cli)?)?;
    let options = RunOptions {
        resume: cli.resume,
        limit: cli.limit,
    };
    for stage in cli.command.stages() {
        let outcome = pipeline.run_stage(stage, options)?;
        println!("{}", summary(&outcome));
        if stage == Stage::Eval && outcome.manifest.complete {
            let text = std::fs::read_to_string(pipeline.path(EVAL_REPORT))
                .map_err(|e| PipelineError::Io(e.to_string()))?;
            let report: EvalReport = serde_json::from_str(&text).map_err(|e| PipelineError::Io(e.to_string()))?;
            print!("{}", report.table());
        }
        if !outcome.manifest.complete {
            break;
        }
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Command::DemoInit { dir } = &cli.command {
        return match demo::write_demo(dir) {
            Ok(files) => {
                println!("wrote {} files to {}", files.len(), dir.display());
                println!("next: webagg --config {} all", dir.join(demo::CONFIG_FILE).display());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_STAGE
            }
        };
    }
    match run_stages(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
