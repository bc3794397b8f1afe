//! The run loop and action execution.

use std::path::Path;

use rust_decimal::Decimal;

use crate::gateway::{chat, ChatBackend, ChatMessage};
use crate::sandbox::{Sandbox, SandboxError};
use crate::scoring::RunStatus;
use crate::skills::{
    diagnose_flow, lint_verilog, parse_verilog, query_docs, query_opensource_ips, run_openlane,
    simulate_verilog, view_openlane_metrics, LintFinding, LintResult, SkillError,
};
use crate::task::TaskSpec;

use super::{
    parse_action, Action, AgentConfig, AgentError, AgentKind, EventPayload, Observation, RunState,
    TaskRunSummary, MAX_DELEGATION_DEPTH,
};

/// Copy the task's seed files into a fresh workspace.
pub fn provision_workspace(task: &TaskSpec, workspace: &Path) -> std::io::Result<()> {
    for (rel, bytes) in &task.workspace_seed {
        let target = workspace.join(rel);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&target, bytes)?;
        // seeded shell scripts must be runnable
        #[cfg(unix)]
        if rel.ends_with(".sh") {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&target, std::fs::Permissions::from_mode(0o755))?;
        }
    }
    Ok(())
}

fn template(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::Main => include_str!("prompts/main.txt"),
        AgentKind::Verification => include_str!("prompts/verification.txt"),
        AgentKind::Hardening => include_str!("prompts/hardening.txt"),
        AgentKind::CaravelIntegration => include_str!("prompts/caravel_integration.txt"),
    }
}

/// Re-render a logged action the way the model originally phrased it, for
/// the rolling dialogue window.
fn render_action(action: &Action) -> String {
    let body = match action {
        Action::RunShell { command } => command.clone(),
        Action::EditFile { path, content } => format!("edit {path}\n{content}"),
        Action::ToolCall { skill, args } => {
            let rendered_args: Vec<String> = args
                .iter()
                .map(|(k, v)| {
                    if k.chars().all(|c| c.is_ascii_digit()) {
                        format!("'{v}'")
                    } else {
                        format!("{k}='{v}'")
                    }
                })
                .collect();
            format!("{skill}({})", rendered_args.join(", "))
        }
        Action::Delegate { agent, instruction } => format!("delegate {agent}: {instruction}"),
        Action::Finish { summary } => format!("finish: {summary}"),
    };
    format!("```\n{body}\n```")
}

/// Build the message list for the next model consultation: the agent's
/// system template, the task prompt (plus accumulated notes), then the most
/// recent trajectory events that fit the character budget, oldest replaced
/// by a summary marker.
pub fn render_prompt(
    kind: AgentKind,
    state: &RunState,
    task_prompt: &str,
    config: &AgentConfig,
) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::system(template(kind))];
    let mut task_message = task_prompt.to_string();
    if !state.notes.is_empty() {
        task_message.push_str("\n\nProject notes so far:\n");
        task_message.push_str(&state.notes);
    }
    messages.push(ChatMessage::user(task_message));

    // newest-first accumulation under the budget, then restore order
    let mut window: Vec<ChatMessage> = Vec::new();
    let mut used = 0usize;
    let mut omitted = 0usize;
    for event in state.trajectory.iter().rev() {
        let message = match &event.payload {
            EventPayload::Action(action) => ChatMessage::assistant(render_action(action)),
            EventPayload::Observation(observation) => ChatMessage::user(observation.render()),
        };
        if used + message.content.len() > config.context_char_budget && !window.is_empty() {
            omitted = state.trajectory.len() - window.len();
            break;
        }
        used += message.content.len();
        window.push(message);
    }
    if omitted > 0 {
        messages.push(ChatMessage::user(format!(
            "[earlier trajectory summarized: {omitted} events omitted]"
        )));
    }
    window.reverse();
    messages.extend(window);
    messages
}

fn lint_error_result(error: &SkillError) -> LintResult {
    LintResult {
        success: false,
        findings: Vec::<LintFinding>::new(),
        raw_excerpt: error.to_string(),
    }
}

fn atomic_write(target: &Path, content: &str) -> std::io::Result<()> {
    let dir = target.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        target.file_name().unwrap_or_default().to_string_lossy()
    ));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, target)
}

fn arg<'a>(args: &'a std::collections::BTreeMap<String, String>, key: &str) -> Option<&'a str> {
    args.get(key).map(String::as_str)
}

fn dispatch_tool(
    skill: &str,
    args: &std::collections::BTreeMap<String, String>,
    state: &RunState,
    config: &AgentConfig,
    sandbox: &Sandbox,
    backend: &dyn ChatBackend,
) -> Result<(String, bool), SkillError> {
    let resolve = |raw: &str| -> Result<std::path::PathBuf, SkillError> {
        sandbox.resolve(raw).map_err(|e| match e {
            SandboxError::PathEscape(p) => {
                SkillError::FileMissing(std::path::PathBuf::from(format!("{p} (outside workspace)")))
            }
            other => SkillError::Io(std::io::Error::other(other.to_string())),
        })
    };
    let workspace = &state.workspace;
    match skill {
        "lint_verilog" => {
            let path = resolve(arg(args, "0").unwrap_or_default())?;
            let result = lint_verilog(&path, workspace, &config.lint_driver, config.timeouts.lint)?;
            let mut rendered = result.summary();
            for finding in &result.findings {
                rendered.push_str(&format!(
                    "\n{}:{}: {:?}: {}",
                    finding.file,
                    finding.line.unwrap_or(0),
                    finding.severity,
                    finding.message
                ));
            }
            Ok((rendered, result.success))
        }
        "simulate_verilog" => {
            let entry = arg(args, "0").unwrap_or("make");
            let workdir = if workspace.join("test").is_dir() {
                workspace.join("test")
            } else {
                workspace.clone()
            };
            let result =
                simulate_verilog(&workdir, entry, &config.sim_driver, config.timeouts.simulate)?;
            let mut rendered = format!(
                "** TESTS={} PASS={} FAIL={} SKIP={} **",
                result.tests_total, result.tests_passed, result.tests_failed, result.tests_skipped
            );
            for assertion in &result.failed_assertions {
                rendered.push_str(&format!("\nAssertionError: {assertion}"));
            }
            Ok((rendered, result.success))
        }
        "parse_verilog" => {
            let path = resolve(arg(args, "0").unwrap_or_default())?;
            let summary = parse_verilog(&path, workspace, &config.ast_driver, config.timeouts.parse)?;
            Ok((
                serde_json::to_string_pretty(&summary).expect("ast serializes"),
                true,
            ))
        }
        "run_openlane" => {
            let config_path = resolve(arg(args, "0").unwrap_or("/workspace/config.json"))?;
            let runs_root = workspace.join("runs");
            match run_openlane(
                &config_path,
                &runs_root,
                &config.flow_driver,
                config.timeouts.openlane,
            ) {
                Ok(result) if result.success => Ok(("OpenLane ran successfully.".into(), true)),
                Ok(result) => Ok((
                    format!("OpenLane finished but produced no GDS.\n{}", result.log_tail),
                    false,
                )),
                Err(SkillError::FlowFailed { log_tail, .. }) => {
                    Ok((format!("OpenLane flow failed.\n{log_tail}"), false))
                }
                Err(e) => Err(e),
            }
        }
        "view_openlane_metrics" => {
            let root = resolve(arg(args, "0").unwrap_or("/workspace"))?;
            let table = view_openlane_metrics(&root)?;
            let mut rendered =
                String::from("Metrics for the latest openlane flow run:\n\nMetric,Value\n");
            for (key, value) in table.iter() {
                rendered.push_str(&format!("{key},{value}\n"));
            }
            Ok((rendered, true))
        }
        "diagnose_flow" => {
            let root = resolve(arg(args, "0").unwrap_or("/workspace"))?;
            let diagnosis = diagnose_flow(&root, &config.profile, backend)?;
            let mut rendered = format!("Failing stage: {}\n", diagnosis.failing_stage);
            for cause in &diagnosis.suspected_causes {
                rendered.push_str(&format!("Suspected cause: {cause}\n"));
            }
            for excerpt in &diagnosis.evidence {
                rendered.push_str(&format!("Evidence: {excerpt}\n"));
            }
            for fix in &diagnosis.suggested_fixes {
                rendered.push_str(&format!("Suggested fix: {fix}\n"));
            }
            Ok((rendered, true))
        }
        "query_opensource_ips" => {
            let store = config.store.as_ref().ok_or_else(|| {
                SkillError::CorpusMissing("no knowledge base configured".into())
            })?;
            let k = arg(args, "k").and_then(|v| v.parse().ok()).unwrap_or(5);
            let matches = query_opensource_ips(store, arg(args, "0").unwrap_or_default(), k)?;
            let rendered = matches
                .iter()
                .map(|m| {
                    format!(
                        "{} (score {:.3}){}\n  {}",
                        m.name,
                        m.score,
                        m.source_url
                            .as_deref()
                            .map(|u| format!(" — {u}"))
                            .unwrap_or_default(),
                        m.description
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok((rendered, true))
        }
        "query_docs" => {
            let store = config.store.as_ref().ok_or_else(|| {
                SkillError::CorpusMissing("no knowledge base configured".into())
            })?;
            let k = arg(args, "k").and_then(|v| v.parse().ok()).unwrap_or(5);
            let answer = query_docs(
                store,
                arg(args, "0").unwrap_or_default(),
                k,
                Some((&config.profile, backend)),
            )?;
            let rendered = match answer.answer {
                Some(text) => text,
                None => answer
                    .passages
                    .iter()
                    .map(|h| format!("[{}] {}", h.chunk.chunk_id, h.chunk.text))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            Ok((rendered, true))
        }
        other => Err(SkillError::ToolMissing(other.into(), "unknown skill".into())),
    }
}

/// Execute one non-control action (shell, edit, or tool call) and produce
/// its observation. Failures become observations, never panics or errors.
pub fn execute_action(
    action: &Action,
    state: &RunState,
    config: &AgentConfig,
    sandbox: &Sandbox,
    backend: &dyn ChatBackend,
    kind: AgentKind,
) -> Observation {
    match action {
        Action::RunShell { command } => match sandbox.run(command, config.shell_timeout) {
            Ok(outcome) => Observation::Shell {
                stdout: outcome.stdout,
                stderr: outcome.stderr,
                exit_code: outcome.exit_code,
                timed_out: outcome.timed_out,
            },
            Err(e) => Observation::Rejected {
                reason: e.to_string(),
            },
        },
        Action::EditFile { path, content } => {
            let resolved = match sandbox.resolve(path) {
                Ok(p) => p,
                Err(e) => {
                    return Observation::Rejected {
                        reason: e.to_string(),
                    }
                }
            };
            let old = std::fs::read_to_string(&resolved).unwrap_or_default();
            if let Err(e) = atomic_write(&resolved, content) {
                return Observation::Rejected {
                    reason: format!("edit failed: {e}"),
                };
            }
            let diff = similar::TextDiff::from_lines(&old, content)
                .unified_diff()
                .context_radius(3)
                .header(path, path)
                .to_string();
            let is_verilog = resolved
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|ext| ext == "v" || ext == "sv");
            let auto_lint = is_verilog.then(|| {
                lint_verilog(&resolved, &state.workspace, &config.lint_driver, config.timeouts.lint)
                    .unwrap_or_else(|e| lint_error_result(&e))
            });
            Observation::Edit {
                path: path.clone(),
                diff,
                auto_lint,
            }
        }
        Action::ToolCall { skill, args } => {
            if !kind.allowed_tools().contains(&skill.as_str()) {
                return Observation::Rejected {
                    reason: format!("skill `{skill}` is not available to the {kind} agent"),
                };
            }
            match dispatch_tool(skill, args, state, config, sandbox, backend) {
                Ok((rendered, success)) => Observation::Tool {
                    skill: skill.clone(),
                    rendered,
                    success,
                },
                Err(e) => Observation::Tool {
                    skill: skill.clone(),
                    rendered: format!("tool error: {e}"),
                    success: false,
                },
            }
        }
        // control actions are handled by the loop itself
        Action::Delegate { .. } | Action::Finish { .. } => Observation::Rejected {
            reason: "control action reached the executor".into(),
        },
    }
}

enum LoopEnd {
    Finished(String),
    Budget,
}

fn run_loop(
    kind: AgentKind,
    prompt: &str,
    depth: u32,
    state: &mut RunState,
    config: &AgentConfig,
    sandbox: &Sandbox,
    backend: &dyn ChatBackend,
) -> Result<LoopEnd, AgentError> {
    loop {
        if state.steps_remaining() == 0 || state.cost_exhausted() {
            return Ok(LoopEnd::Budget);
        }
        let messages = render_prompt(kind, state, prompt, config);
        let exchange = chat(&config.profile, backend, &messages, &config.decode)?;
        state.steps_used += 1;
        state.cost_used += exchange.cost_usd.unwrap_or(Decimal::ZERO);

        let action = match parse_action(&exchange.response) {
            Ok(action) => action,
            Err(reason) => {
                state.log(
                    kind,
                    EventPayload::Observation(Observation::ParseFailure {
                        hint: format!(
                            "Could not parse an action from your reply ({reason}). \
                             Reply with exactly one fenced code block containing a shell \
                             command, an `edit <path>` directive, a tool call, a \
                             `delegate <agent>: <instruction>`, or `finish: <summary>`."
                        ),
                    }),
                );
                continue;
            }
        };
        state.log(kind, EventPayload::Action(action.clone()));

        match action {
            Action::Finish { summary } => return Ok(LoopEnd::Finished(summary)),
            Action::Delegate { agent, instruction } => {
                if depth + 1 > MAX_DELEGATION_DEPTH {
                    state.log(
                        kind,
                        EventPayload::Observation(Observation::Rejected {
                            reason: format!(
                                "delegation depth {} exceeds the maximum of {MAX_DELEGATION_DEPTH}",
                                depth + 1
                            ),
                        }),
                    );
                    continue;
                }
                if agent == kind {
                    state.log(
                        kind,
                        EventPayload::Observation(Observation::Rejected {
                            reason: "an agent cannot delegate to itself".into(),
                        }),
                    );
                    continue;
                }
                let steps_before = state.steps_used;
                match run_loop(agent, &instruction, depth + 1, state, config, sandbox, backend)? {
                    LoopEnd::Finished(summary) => {
                        state.log(
                            kind,
                            EventPayload::Observation(Observation::Delegated {
                                agent,
                                summary,
                                steps_used: state.steps_used - steps_before,
                            }),
                        );
                    }
                    LoopEnd::Budget => return Ok(LoopEnd::Budget),
                }
            }
            other => {
                let observation = execute_action(&other, state, config, sandbox, backend, kind);
                state.log(kind, EventPayload::Observation(observation));
            }
        }
    }
}

/// Run a task to completion, budget exhaustion, or provider error. Provider
/// failure is reported in the summary status; the partial trajectory is
/// preserved in the returned state either way.
pub fn run_task(
    task: &TaskSpec,
    config: &AgentConfig,
    sandbox: &Sandbox,
    backend: &dyn ChatBackend,
) -> Result<(RunState, TaskRunSummary), AgentError> {
    provision_workspace(task, sandbox.root())?;
    let mut state = RunState::new(&task.id, sandbox.root(), config.limits.clone());
    let outcome = run_loop(
        AgentKind::Main,
        &task.prompt,
        1,
        &mut state,
        config,
        sandbox,
        backend,
    );
    let (status, finish_summary) = match outcome {
        Ok(LoopEnd::Finished(summary)) => (RunStatus::Completed, Some(summary)),
        Ok(LoopEnd::Budget) => (RunStatus::BudgetExhausted, None),
        Err(e) => {
            // keep the partial trajectory; surface the failure in the status
            state.notes.push_str(&format!("\nrun aborted: {e}"));
            (RunStatus::Error, None)
        }
    };
    let summary = TaskRunSummary {
        steps: state.steps_used,
        cost_usd: state.cost_used,
        status,
        finish_summary,
    };
    Ok((state, summary))
}

/// Serialize the trajectory as JSON lines.
pub fn trajectory_jsonl(state: &RunState) -> String {
    let mut out = String::new();
    for event in &state.trajectory {
        out.push_str(&serde_json::to_string(event).expect("event serializes"));
        out.push('\n');
    }
    out
}
