//! The action/observation loop: render prompts, parse the model's next
//! action, execute it in the sandboxed workspace, and log the trajectory.
//!
//! One *step* is one model consultation — an action plus the observation it
//! produced. Sub-agent delegation runs a nested loop against the same
//! workspace, budgets, and trajectory.

mod parse;
mod run;

pub use parse::parse_action;
pub use run::{execute_action, provision_workspace, render_prompt, run_task, trajectory_jsonl};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{DecodeParams, GatewayError, ModelProfile};
use crate::sandbox::SandboxError;
use crate::scoring::RunStatus;
use crate::skills::{FlowDriver, LintResult, SkillTimeouts, ToolDriver};
use crate::task::RunLimits;

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

/// Maximum delegation depth: the top-level agent is depth 1.
pub const MAX_DELEGATION_DEPTH: u32 = 2;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("sandbox: {0}")]
    Sandbox(#[from] SandboxError),
    #[error("model provider failed after retries: {0}")]
    Provider(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Main,
    Verification,
    Hardening,
    CaravelIntegration,
}

impl AgentKind {
    /// Skills this agent may invoke through tool-call actions.
    pub fn allowed_tools(&self) -> &'static [&'static str] {
        match self {
            AgentKind::Main => &[
                "lint_verilog",
                "simulate_verilog",
                "parse_verilog",
                "run_openlane",
                "view_openlane_metrics",
                "query_opensource_ips",
                "query_docs",
            ],
            AgentKind::Verification => {
                &["lint_verilog", "simulate_verilog", "parse_verilog", "query_docs"]
            }
            AgentKind::Hardening => &[
                "lint_verilog",
                "run_openlane",
                "view_openlane_metrics",
                "diagnose_flow",
                "query_docs",
            ],
            AgentKind::CaravelIntegration => &[
                "lint_verilog",
                "run_openlane",
                "view_openlane_metrics",
                "query_opensource_ips",
                "query_docs",
            ],
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AgentKind::Main => "main",
            AgentKind::Verification => "verification",
            AgentKind::Hardening => "hardening",
            AgentKind::CaravelIntegration => "caravel_integration",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "main" => Ok(AgentKind::Main),
            "verification" => Ok(AgentKind::Verification),
            "hardening" => Ok(AgentKind::Hardening),
            "caravel_integration" => Ok(AgentKind::CaravelIntegration),
            other => Err(format!("unknown agent kind `{other}`")),
        }
    }
}

/// One parsed agent action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    RunShell { command: String },
    EditFile { path: String, content: String },
    ToolCall {
        skill: String,
        /// Positional args keyed "0", "1", …; named args keyed by name.
        args: BTreeMap<String, String>,
    },
    Delegate { agent: AgentKind, instruction: String },
    Finish { summary: String },
}

/// The environment's reply to one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    Shell {
        stdout: String,
        stderr: String,
        exit_code: i32,
        timed_out: bool,
    },
    Edit {
        path: String,
        diff: String,
        /// Present iff the edited file was `.v`/`.sv`.
        auto_lint: Option<LintResult>,
    },
    Tool {
        skill: String,
        rendered: String,
        success: bool,
    },
    Delegated {
        agent: AgentKind,
        summary: String,
        steps_used: u64,
    },
    /// The action was refused (path escape, disallowed tool, depth cap…).
    Rejected { reason: String },
    /// The model's reply contained no recognizable action.
    ParseFailure { hint: String },
}

impl Observation {
    /// How the observation is shown back to the model.
    pub fn render(&self) -> String {
        match self {
            Observation::Shell {
                stdout,
                stderr,
                exit_code,
                timed_out,
            } => {
                let mut out = String::new();
                if *timed_out {
                    out.push_str("[command timed out]\n");
                }
                out.push_str(stdout);
                if !stderr.is_empty() {
                    out.push_str(stderr);
                }
                if *exit_code != 0 {
                    out.push_str(&format!("\n[exit code {exit_code}]"));
                }
                out
            }
            Observation::Edit { diff, auto_lint, .. } => {
                let mut out = diff.clone();
                if let Some(lint) = auto_lint {
                    out.push('\n');
                    out.push_str(&lint.summary());
                }
                out
            }
            Observation::Tool { rendered, .. } => rendered.clone(),
            Observation::Delegated { agent, summary, .. } => {
                format!("[{agent} agent finished] {summary}")
            }
            Observation::Rejected { reason } => format!("[action rejected] {reason}"),
            Observation::ParseFailure { hint } => hint.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventPayload {
    Action(Action),
    Observation(Observation),
}

/// One trajectory log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub schema_version: u32,
    /// 1-based model-consultation counter.
    pub step: u64,
    pub agent: AgentKind,
    #[serde(flatten)]
    pub payload: EventPayload,
    pub cost_usd: Decimal,
    /// Milliseconds since the run started. The only nondeterministic field;
    /// determinism checks zero it out.
    pub wall_time_ms: u64,
}

/// Mutable state of one run.
#[derive(Debug)]
pub struct RunState {
    pub task_id: String,
    pub workspace: PathBuf,
    /// The main agent's persistent project summary, fed into every prompt.
    pub notes: String,
    pub steps_used: u64,
    pub cost_used: Decimal,
    pub limits: RunLimits,
    pub trajectory: Vec<TrajectoryEvent>,
    pub(crate) started: std::time::Instant,
}

impl RunState {
    pub fn new(task_id: impl Into<String>, workspace: impl Into<PathBuf>, limits: RunLimits) -> Self {
        RunState {
            task_id: task_id.into(),
            workspace: workspace.into(),
            notes: String::new(),
            steps_used: 0,
            cost_used: Decimal::ZERO,
            limits,
            trajectory: Vec::new(),
            started: std::time::Instant::now(),
        }
    }

    pub fn steps_remaining(&self) -> u64 {
        self.limits.max_steps.saturating_sub(self.steps_used)
    }

    pub fn cost_exhausted(&self) -> bool {
        self.cost_used >= self.limits.max_cost_usd
    }

    pub(crate) fn log(&mut self, agent: AgentKind, payload: EventPayload) {
        self.trajectory.push(TrajectoryEvent {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            step: self.steps_used,
            agent,
            payload,
            cost_usd: self.cost_used,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        });
    }
}

/// Everything a run needs besides the task and the chat backend.
pub struct AgentConfig {
    pub profile: ModelProfile,
    pub decode: DecodeParams,
    pub limits: RunLimits,
    pub timeouts: SkillTimeouts,
    pub lint_driver: ToolDriver,
    pub sim_driver: ToolDriver,
    pub ast_driver: ToolDriver,
    pub flow_driver: FlowDriver,
    /// Read-only retrieval store for the query skills, when configured.
    pub store: Option<std::sync::Arc<crate::kb::VectorStore>>,
    /// Character budget for the rolling trajectory window in prompts.
    pub context_char_budget: usize,
    /// Default timeout for plain shell actions.
    pub shell_timeout: std::time::Duration,
}

impl AgentConfig {
    /// A config wired entirely to mocks — no tools, no network.
    pub fn mocked(profile: ModelProfile, limits: RunLimits, flow_driver: FlowDriver) -> Self {
        let clean = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures/lint/verilator_clean.txt");
        AgentConfig {
            profile,
            decode: DecodeParams::default(),
            limits,
            timeouts: SkillTimeouts::default(),
            lint_driver: ToolDriver::mock(&clean, 0),
            sim_driver: ToolDriver::mock(&clean, 0),
            ast_driver: ToolDriver::mock(&clean, 0),
            flow_driver,
            store: None,
            context_char_budget: 24_000,
            shell_timeout: std::time::Duration::from_secs(600),
        }
    }
}

/// Final accounting for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRunSummary {
    pub steps: u64,
    pub cost_usd: Decimal,
    pub status: RunStatus,
    pub finish_summary: Option<String>,
}
