//! Workspace-confined command execution.
//!
//! A [`Sandbox`] owns a workspace root and runs shell commands against it in
//! one of three modes: direct subprocess, subprocess wrapped in a container
//! command template, or a scripted driver that replays canned outputs for
//! deterministic tests. All modes share the same output-capture and
//! truncation policy, and all workspace paths go through
//! [`resolve_workspace_path`] so nothing escapes the root.

use std::collections::VecDeque;
use std::io::Read;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Alias the agent uses for the workspace root in commands and paths.
pub const WORKSPACE_ALIAS: &str = "/workspace";

/// Truncation policy: keep this many bytes from the head of each stream…
pub const TRUNCATE_HEAD_BYTES: usize = 8 * 1024;
/// …and this many from the tail, with a marker in between.
pub const TRUNCATE_TAIL_BYTES: usize = 2 * 1024;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("path `{0}` escapes the workspace root")]
    PathEscape(String),
    #[error("command timed out after {0:?}")]
    Timeout(Duration),
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Captured result of one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub timed_out: bool,
}

impl CommandOutcome {
    pub fn success(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }
}

/// One canned rule for the scripted driver: the first command containing
/// `pattern` as a substring consumes the rule (when `once`) and yields the
/// fixture output.
#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub pattern: String,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    /// Consume the rule after its first match.
    pub once: bool,
}

impl ScriptRule {
    pub fn once(pattern: impl Into<String>, stdout: impl Into<String>, exit_code: i32) -> Self {
        ScriptRule {
            pattern: pattern.into(),
            stdout: stdout.into(),
            stderr: String::new(),
            exit_code,
            once: true,
        }
    }

    pub fn always(pattern: impl Into<String>, stdout: impl Into<String>, exit_code: i32) -> Self {
        ScriptRule {
            once: false,
            ..ScriptRule::once(pattern, stdout, exit_code)
        }
    }
}

/// How commands are executed.
pub enum ExecMode {
    /// Plain subprocess via `sh -c`, cwd = workspace root.
    Direct,
    /// Subprocess wrapped in a container command template. The template is a
    /// full argv where `{workspace}` expands to the root and `{command}` to
    /// the shell command, e.g.
    /// `["docker", "run", "-v", "{workspace}:/workspace", "img", "sh", "-c", "{command}"]`.
    ContainerTemplate(Vec<String>),
    /// Replay canned outputs; commands never touch a real shell. Ordered
    /// rules are tried first-match; unmatched commands fail with exit 127.
    Scripted(Mutex<VecDeque<ScriptRule>>),
}

impl std::fmt::Debug for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecMode::Direct => f.write_str("Direct"),
            ExecMode::ContainerTemplate(t) => f.debug_tuple("ContainerTemplate").field(t).finish(),
            ExecMode::Scripted(_) => f.write_str("Scripted"),
        }
    }
}

/// Resolve a path the agent supplied (possibly under the `/workspace` alias,
/// possibly relative) to a real path under `root`, rejecting escapes.
///
/// The check is lexical: `..` components are rejected rather than resolved,
/// so the target does not need to exist yet.
pub fn resolve_workspace_path(root: &Path, raw: &str) -> Result<PathBuf, SandboxError> {
    let stripped = raw
        .strip_prefix(WORKSPACE_ALIAS)
        .map(|rest| rest.trim_start_matches('/'))
        .unwrap_or(raw);
    let candidate = Path::new(stripped);
    if candidate.is_absolute() {
        return Err(SandboxError::PathEscape(raw.to_string()));
    }
    let mut resolved = root.to_path_buf();
    for comp in candidate.components() {
        match comp {
            Component::Normal(part) => resolved.push(part),
            Component::CurDir => {}
            _ => return Err(SandboxError::PathEscape(raw.to_string())),
        }
    }
    Ok(resolved)
}

/// Truncate a stream to head + tail with an elision marker. Short streams
/// pass through unchanged. Cuts snap to UTF-8 boundaries.
pub fn truncate_output(text: &str) -> String {
    if text.len() <= TRUNCATE_HEAD_BYTES + TRUNCATE_TAIL_BYTES {
        return text.to_string();
    }
    let mut head_end = TRUNCATE_HEAD_BYTES;
    while !text.is_char_boundary(head_end) {
        head_end -= 1;
    }
    let mut tail_start = text.len() - TRUNCATE_TAIL_BYTES;
    while !text.is_char_boundary(tail_start) {
        tail_start += 1;
    }
    let elided = tail_start - head_end;
    format!(
        "{}\n[... {elided} bytes truncated ...]\n{}",
        &text[..head_end],
        &text[tail_start..]
    )
}

pub struct Sandbox {
    root: PathBuf,
    mode: ExecMode,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox")
            .field("root", &self.root)
            .field("mode", &self.mode)
            .finish()
    }
}

impl Sandbox {
    pub fn new(root: impl Into<PathBuf>, mode: ExecMode) -> Result<Self, SandboxError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(SandboxError::Unavailable(format!(
                "workspace root {} is not a directory",
                root.display()
            )));
        }
        Ok(Sandbox { root, mode })
    }

    pub fn direct(root: impl Into<PathBuf>) -> Result<Self, SandboxError> {
        Sandbox::new(root, ExecMode::Direct)
    }

    pub fn scripted(
        root: impl Into<PathBuf>,
        rules: impl IntoIterator<Item = ScriptRule>,
    ) -> Result<Self, SandboxError> {
        Sandbox::new(
            root,
            ExecMode::Scripted(Mutex::new(rules.into_iter().collect())),
        )
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolve an agent-supplied path against this sandbox's root.
    pub fn resolve(&self, raw: &str) -> Result<PathBuf, SandboxError> {
        resolve_workspace_path(&self.root, raw)
    }

    /// Run a shell command with a timeout. Output streams are captured and
    /// truncated per the head+tail policy. Timeouts kill the process and
    /// return an outcome flagged `timed_out` (exit_code -1) rather than an
    /// error, so callers can surface them as observations.
    pub fn run(&self, command: &str, timeout: Duration) -> Result<CommandOutcome, SandboxError> {
        match &self.mode {
            ExecMode::Scripted(rules) => {
                let mut rules = rules.lock().expect("script rules lock");
                let hit = rules
                    .iter()
                    .position(|r| command.contains(r.pattern.as_str()));
                match hit {
                    Some(i) => {
                        let rule = rules[i].clone();
                        if rule.once {
                            rules.remove(i);
                        }
                        Ok(CommandOutcome {
                            stdout: truncate_output(&rule.stdout),
                            stderr: truncate_output(&rule.stderr),
                            exit_code: rule.exit_code,
                            timed_out: false,
                        })
                    }
                    None => Ok(CommandOutcome {
                        stdout: String::new(),
                        stderr: format!("no scripted rule matches command: {command}"),
                        exit_code: 127,
                        timed_out: false,
                    }),
                }
            }
            ExecMode::Direct => {
                let mut cmd = Command::new("sh");
                cmd.arg("-c").arg(rewrite_alias(command, &self.root));
                self.run_subprocess(cmd, timeout)
            }
            ExecMode::ContainerTemplate(template) => {
                let argv: Vec<String> = template
                    .iter()
                    .map(|part| {
                        part.replace("{workspace}", &self.root.to_string_lossy())
                            .replace("{command}", command)
                    })
                    .collect();
                let (program, rest) = argv.split_first().ok_or_else(|| {
                    SandboxError::Unavailable("empty container template".into())
                })?;
                let mut cmd = Command::new(program);
                cmd.args(rest);
                self.run_subprocess(cmd, timeout)
            }
        }
    }

    fn run_subprocess(
        &self,
        mut cmd: Command,
        timeout: Duration,
    ) -> Result<CommandOutcome, SandboxError> {
        cmd.current_dir(&self.root);
        Ok(run_command_with_timeout(cmd, timeout)?)
    }
}

/// Run a prepared command to completion or `timeout`, capturing and
/// truncating both streams. On timeout the whole process group is killed and
/// the outcome is flagged `timed_out` with exit_code -1.
pub fn run_command_with_timeout(
    mut cmd: Command,
    timeout: Duration,
) -> std::io::Result<CommandOutcome> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // Own process group so a timeout can kill the whole tree; otherwise
    // grandchildren keep the output pipes open past the deadline.
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn()?;

    // Drain pipes on threads so a chatty child can't deadlock on a full
    // pipe while we poll for exit.
    let stdout_pipe = child.stdout.take().expect("stdout piped");
    let stderr_pipe = child.stderr.take().expect("stderr piped");
    let out_thread = std::thread::spawn(move || read_all(stdout_pipe));
    let err_thread = std::thread::spawn(move || read_all(stderr_pipe));

    let deadline = Instant::now() + timeout;
    let timed_out = loop {
        match child.try_wait()? {
            Some(_) => break false,
            None if Instant::now() >= deadline => {
                kill_tree(&mut child);
                let _ = child.wait();
                break true;
            }
            None => std::thread::sleep(Duration::from_millis(10)),
        }
    };
    let stdout = out_thread.join().expect("stdout reader");
    let stderr = err_thread.join().expect("stderr reader");
    let exit_code = if timed_out {
        -1
    } else {
        child.wait()?.code().unwrap_or(-1)
    };
    Ok(CommandOutcome {
        stdout: truncate_output(&stdout),
        stderr: truncate_output(&stderr),
        exit_code,
        timed_out,
    })
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    // the child leads its own process group (see process_group(0) above)
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Rewrite the `/workspace` alias in a shell command to the actual root.
fn rewrite_alias(command: &str, root: &Path) -> String {
    command.replace(WORKSPACE_ALIAS, &root.to_string_lossy())
}

fn read_all(mut pipe: impl Read) -> String {
    let mut buf = Vec::new();
    let _ = pipe.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).into_owned()
}
