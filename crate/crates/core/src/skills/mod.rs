//! The hardware tool interface: lint, simulation, AST extraction, the
//! physical flow, metrics, flow diagnosis, and the two knowledge-base query
//! skills.
//!
//! Every skill that shells out has two drivers — a real subprocess and a mock
//! that replays a recorded fixture — feeding one shared parser, so structured
//! results are identical either way.

mod ast;
mod lint;
mod openlane;
mod query;
mod sim;

pub use ast::{parse_ast_json, parse_verilog, AstSummary, ModuleSummary, Port, PortDirection};
pub use lint::{lint_verilog, parse_lint_output, LintFinding, LintResult, Severity};
pub use openlane::{
    diagnose_flow, run_openlane, view_openlane_metrics, FlowDiagnosis, FlowDriver, FlowOutcome,
    FlowResult, MetricsTable, PpaSummary,
};
pub use query::{query_docs, query_opensource_ips, DocsAnswer, IpMatch};
pub use sim::{parse_sim_log, simulate_verilog, SimResult};

use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::kb::KbError;
use crate::sandbox::{run_command_with_timeout, CommandOutcome};

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("file not found: {0}")]
    FileMissing(PathBuf),
    #[error("{0} is not a Verilog source (.v/.sv)")]
    BadExtension(PathBuf),
    #[error("tool `{0}` is not available: {1}")]
    ToolMissing(String, String),
    #[error("tool timed out after {0:?}")]
    Timeout(Duration),
    #[error("no runnable test harness in {0}")]
    HarnessMissing(PathBuf),
    #[error("external parser failed: {0}")]
    ParserError(String),
    #[error("flow config is missing required key `{key}`")]
    ConfigInvalid { key: String },
    #[error("flow failed in {run_dir}: {log_tail}")]
    FlowFailed { run_dir: PathBuf, log_tail: String },
    #[error("no metrics report found under {0}")]
    MetricsMissing(PathBuf),
    #[error("metric `{key}` has unparseable value `{value}`")]
    MetricUnparseable { key: String, value: String },
    #[error("no PPA metrics present in the table")]
    AllMissing,
    #[error("run under {0} has no failing stage to diagnose")]
    NoFailureFound(PathBuf),
    #[error("knowledge corpus missing: {0}")]
    CorpusMissing(String),
    #[error("model provider: {0}")]
    Provider(#[from] GatewayError),
    #[error("knowledge base: {0}")]
    Kb(KbError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<KbError> for SkillError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::CorpusMissing(name) => SkillError::CorpusMissing(name),
            KbError::Provider(p) => SkillError::Provider(p),
            other => SkillError::Kb(other),
        }
    }
}

/// Default per-skill subprocess timeouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkillTimeouts {
    pub lint: Duration,
    pub simulate: Duration,
    pub parse: Duration,
    pub openlane: Duration,
}

impl Default for SkillTimeouts {
    fn default() -> Self {
        SkillTimeouts {
            lint: Duration::from_secs(60),
            simulate: Duration::from_secs(600),
            parse: Duration::from_secs(60),
            openlane: Duration::from_secs(3600),
        }
    }
}

/// How a shelling-out skill obtains its raw tool output.
#[derive(Debug, Clone)]
pub enum ToolDriver {
    /// Spawn `argv`, with `{path}` in any element replaced by the target
    /// file and `{workdir}` by the working directory.
    Real { argv: Vec<String> },
    /// Read a recorded output fixture instead of spawning anything.
    Mock { fixture: PathBuf, exit_code: i32 },
}

impl ToolDriver {
    pub fn mock(fixture: impl Into<PathBuf>, exit_code: i32) -> Self {
        ToolDriver::Mock {
            fixture: fixture.into(),
            exit_code,
        }
    }

    /// Produce the raw output this driver yields for `path` in `workdir`.
    /// This is the only mode-dependent step; parsing is shared downstream.
    pub(crate) fn obtain(
        &self,
        path: &str,
        workdir: &std::path::Path,
        timeout: Duration,
    ) -> Result<CommandOutcome, SkillError> {
        match self {
            ToolDriver::Mock { fixture, exit_code } => {
                let text = std::fs::read_to_string(fixture)
                    .map_err(|_| SkillError::FileMissing(fixture.clone()))?;
                Ok(CommandOutcome {
                    stdout: text,
                    stderr: String::new(),
                    exit_code: *exit_code,
                    timed_out: false,
                })
            }
            ToolDriver::Real { argv } => {
                let argv: Vec<String> = argv
                    .iter()
                    .map(|a| {
                        a.replace("{path}", path)
                            .replace("{workdir}", &workdir.to_string_lossy())
                    })
                    .collect();
                let (program, rest) = argv
                    .split_first()
                    .ok_or_else(|| SkillError::ToolMissing("<empty argv>".into(), String::new()))?;
                let mut cmd = Command::new(program);
                cmd.args(rest).current_dir(workdir);
                let outcome = run_command_with_timeout(cmd, timeout).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        SkillError::ToolMissing(program.clone(), e.to_string())
                    } else {
                        SkillError::Io(e)
                    }
                })?;
                if outcome.timed_out {
                    return Err(SkillError::Timeout(timeout));
                }
                Ok(outcome)
            }
        }
    }
}
