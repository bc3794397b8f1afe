//! `chipbench`: run agent-driven hardware-design benchmark tasks, grade the
//! resulting workspaces, and report suite-level results.
//!
//! Exit codes are a stable contract: 0 success, 1 error, 2 budget exhausted,
//! 3 incomplete grading.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chipbench_cli::commands::{self, EXIT_ERROR};
use chipbench_cli::config::RunConfig;
use chipbench_core::scoring::ReportFormat;

#[derive(Parser)]
#[command(name = "chipbench", version, about = "Agent-driven ASIC design benchmark harness")]
struct Cli {
    /// Run configuration file (TOML, `${VAR}` env interpolation).
    #[arg(long, global = true, default_value = "chipbench.toml")]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent on one task directory.
    Run { task_dir: PathBuf },
    /// Grade a finished workspace against a task definition.
    Eval {
        task_dir: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
    },
    /// Run and grade every (task, model) pair of a suite.
    Suite {
        suite_dir: PathBuf,
        /// Comma-separated model ids; defaults to the configured agent model.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Score-matrix CSV: skip all runs and aggregate these scores.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Discard a manifest written under a different config.
        #[arg(long)]
        force: bool,
    },
    /// Knowledge-base management.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Re-render suite reports from score records on disk.
    Report {
        dir: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Chunk and index text/markdown documents into a corpus.
    Ingest {
        #[arg(long)]
        corpus: String,
        docs_dir: PathBuf,
    },
    /// Query a corpus (or `all`) and print ranked hits.
    Search {
        #[arg(long)]
        corpus: String,
        query: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
}

fn parse_format(s: &str) -> anyhow::Result<ReportFormat> {
    match s {
        "table" => Ok(ReportFormat::Table),
        "csv" => Ok(ReportFormat::Csv),
        "json" => Ok(ReportFormat::Json),
        other => anyhow::bail!("unknown format `{other}` (expected table|csv|json)"),
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    // `report` works from score files alone and needs no config
    if let Command::Report { dir, format } = &cli.command {
        return commands::cmd_report(dir, parse_format(format)?);
    }
    let config = RunConfig::load(&cli.config)?;
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| config.resolve(&config.out_dir));
    match &cli.command {
        Command::Run { task_dir } => commands::cmd_run(task_dir, &config, &out_dir),
        Command::Eval { task_dir, workspace } => {
            commands::cmd_eval(task_dir, workspace, &config, &out_dir)
        }
        Command::Suite {
            suite_dir,
            models,
            scores,
            force,
        } => commands::cmd_suite(suite_dir, models, scores.as_deref(), *force, &config, &out_dir),
        Command::Kb(KbCommand::Ingest { corpus, docs_dir }) => {
            commands::cmd_kb_ingest(corpus, docs_dir, &config)
        }
        Command::Kb(KbCommand::Search { corpus, query, k }) => {
            commands::cmd_kb_search(corpus, query, *k, &config)
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
