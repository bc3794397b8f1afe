//! Static-analysis skill: one structured result shape over both supported
//! linter output formats (Verilator and iverilog).

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{SkillError, ToolDriver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub file: String,
    pub line: Option<u32>,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintResult {
    pub success: bool,
    pub findings: Vec<LintFinding>,
    pub raw_excerpt: String,
}

impl LintResult {
    /// Build from findings, deriving `success` (no error-severity findings).
    pub fn from_findings(findings: Vec<LintFinding>, raw_excerpt: String) -> Self {
        let success = !findings.iter().any(|f| f.severity == Severity::Error);
        LintResult {
            success,
            findings,
            raw_excerpt,
        }
    }

    /// The one-line summary shown to the agent.
    pub fn summary(&self) -> String {
        if self.success {
            "SUCCESS: No linting errors found.".to_string()
        } else {
            let errors = self
                .findings
                .iter()
                .filter(|f| f.severity == Severity::Error)
                .count();
            format!("FAILURE: {errors} linting error(s) found.")
        }
    }
}

/// Parse linter output into findings. Handles both formats:
///
/// - Verilator: `%Error: file.v:9:1: message` / `%Warning-TAG: file.v:1:8: message`
/// - iverilog:  `file.v:9: syntax error` / `file.v:9: error: message` /
///   `file.v:3: warning: message`
///
/// Total over arbitrary input: unrecognized lines are ignored, never fatal.
pub fn parse_lint_output(raw: &str) -> Vec<LintFinding> {
    let verilator =
        Regex::new(r"^%(Error|Warning)(?:-\w+)?: (?:([^\s:]+):(\d+)(?::\d+)?: )?(.+)$")
            .expect("verilator regex");
    let iverilog =
        Regex::new(r"^([^\s:]+):(\d+): (?:(error|warning): )?(.+)$").expect("iverilog regex");
    let mut findings = Vec::new();
    for line in raw.lines() {
        if let Some(c) = verilator.captures(line) {
            let message = c[4].to_string();
            // Verilator's closing "Exiting due to N error(s)" is a tally,
            // not a finding.
            if message.starts_with("Exiting due to") {
                continue;
            }
            findings.push(LintFinding {
                file: c.get(2).map(|m| m.as_str().to_string()).unwrap_or_default(),
                line: c.get(3).and_then(|m| m.as_str().parse().ok()),
                severity: if &c[1] == "Error" {
                    Severity::Error
                } else {
                    Severity::Warning
                },
                message,
            });
        } else if let Some(c) = iverilog.captures(line) {
            let severity = match c.get(3).map(|m| m.as_str()) {
                Some("warning") => Severity::Warning,
                // bare `file:line: syntax error` lines carry no tag
                _ => Severity::Error,
            };
            findings.push(LintFinding {
                file: c[1].to_string(),
                line: c[2].parse().ok(),
                severity,
                message: c[4].to_string(),
            });
        }
    }
    findings
}

/// Lint a Verilog source file through the configured driver.
pub fn lint_verilog(
    path: &Path,
    workdir: &Path,
    driver: &ToolDriver,
    timeout: std::time::Duration,
) -> Result<LintResult, SkillError> {
    if !path.is_file() {
        return Err(SkillError::FileMissing(path.to_path_buf()));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("v") | Some("sv") => {}
        _ => return Err(SkillError::BadExtension(path.to_path_buf())),
    }
    let outcome = driver.obtain(&path.to_string_lossy(), workdir, timeout)?;
    let raw = format!("{}{}", outcome.stdout, outcome.stderr);
    Ok(LintResult::from_findings(parse_lint_output(&raw), raw))
}
