//! Benchmark task definitions: prompt, milestones, checkpoints, weights,
//! evaluation scripts, and workspace seed content.
//!
//! Tasks are loaded from a directory containing a `task.toml` manifest and an
//! optional `seed/` tree that is copied verbatim into the run workspace.
//! Milestone weights are integer percents and must sum to exactly 100;
//! violations are load errors, never silently normalized.

mod manifest;

pub use manifest::{load_suite, load_task, save_task};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use globset::Glob;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("no task manifest found at {0}")]
    MissingManifest(PathBuf),
    #[error("task `{task}`: milestone weights sum to {sum}, expected 100")]
    WeightSum { task: String, sum: u32 },
    #[error("task `{task}`: script milestone `{milestone}` references missing script `{script}`")]
    DanglingScript {
        task: String,
        milestone: String,
        script: String,
    },
    #[error("task `{task}`: invalid checkpoint in milestone `{milestone}`: {reason}")]
    InvalidCheckpoint {
        task: String,
        milestone: String,
        reason: String,
    },
    #[error("task `{task}`: {reason}")]
    Invalid { task: String, reason: String },
    #[error("duplicate task id `{0}` in suite")]
    DuplicateTaskId(String),
    #[error("task `{task}`: {source}")]
    Io {
        task: String,
        #[source]
        source: std::io::Error,
    },
    #[error("task `{task}`: manifest parse error: {reason}")]
    Parse { task: String, reason: String },
}

/// Task complexity bucket. Explicit per task, never inferred.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Integration,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Integration => "integration",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            "integration" => Ok(Difficulty::Integration),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

/// One binary evaluation criterion with a point value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub text: String,
    pub points: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilestoneKind {
    Judge,
    Script,
    Artifact,
}

/// Script milestone payload: path relative to the workspace plus the exit
/// code that counts as success.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptCheck {
    pub path: String,
    #[serde(default)]
    pub expect_exit: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRuleKind {
    FileExistsGlob,
    FileContainsRegex,
}

/// One artifact check worth one point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRule {
    pub kind: ArtifactRuleKind,
    pub pattern: String,
    pub description: String,
}

/// A weighted group of checkpoints, a script check, or artifact rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Milestone {
    pub id: String,
    pub name: String,
    /// Integer percent contribution to the task score.
    pub weight: u32,
    pub kind: MilestoneKind,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default)]
    pub script: Option<ScriptCheck>,
    #[serde(default)]
    pub artifact_rules: Vec<ArtifactRule>,
}

/// Run budgets and per-skill timeouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLimits {
    pub max_steps: u64,
    pub max_cost_usd: rust_decimal::Decimal,
    /// Skill name -> timeout in seconds. Missing skills use driver defaults.
    #[serde(default)]
    pub tool_timeouts: BTreeMap<String, u64>,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_steps: 100,
            max_cost_usd: rust_decimal::Decimal::from(20),
            tool_timeouts: BTreeMap::new(),
        }
    }
}

/// A fully loaded and validated benchmark task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub title: String,
    pub prompt: String,
    pub difficulty: Difficulty,
    pub milestones: Vec<Milestone>,
    /// (workspace-relative path, file bytes), copied verbatim at provisioning.
    pub workspace_seed: Vec<(String, Vec<u8>)>,
    pub limits: RunLimits,
}

impl TaskSpec {
    /// Check every invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), TaskError> {
        let id_ok = !self.id.is_empty()
            && self
                .id
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
        if !id_ok {
            return Err(TaskError::Invalid {
                task: self.id.clone(),
                reason: "id must match [a-z0-9_-]+".into(),
            });
        }
        if self.prompt.trim().is_empty() {
            return Err(TaskError::Invalid {
                task: self.id.clone(),
                reason: "prompt is empty".into(),
            });
        }
        let sum: u32 = self.milestones.iter().map(|m| m.weight).sum();
        if sum != 100 {
            return Err(TaskError::WeightSum {
                task: self.id.clone(),
                sum,
            });
        }
        for m in &self.milestones {
            self.validate_milestone(m)?;
        }
        Ok(())
    }

    fn validate_milestone(&self, m: &Milestone) -> Result<(), TaskError> {
        let invalid = |reason: String| TaskError::InvalidCheckpoint {
            task: self.id.clone(),
            milestone: m.id.clone(),
            reason,
        };
        match m.kind {
            MilestoneKind::Judge => {
                if m.checkpoints.is_empty() {
                    return Err(invalid("judge milestone has no checkpoints".into()));
                }
                for cp in &m.checkpoints {
                    if cp.points < 1 {
                        return Err(invalid(format!("checkpoint `{}` has zero points", cp.id)));
                    }
                    let findings = validate_checkpoint_text(&cp.text);
                    if !findings.is_empty() {
                        return Err(invalid(format!(
                            "checkpoint `{}`: {}",
                            cp.id, findings[0]
                        )));
                    }
                }
            }
            MilestoneKind::Script => {
                if m.script.is_none() {
                    return Err(TaskError::Invalid {
                        task: self.id.clone(),
                        reason: format!("script milestone `{}` has no script path", m.id),
                    });
                }
            }
            MilestoneKind::Artifact => {
                if m.artifact_rules.is_empty() {
                    return Err(TaskError::Invalid {
                        task: self.id.clone(),
                        reason: format!("artifact milestone `{}` has no rules", m.id),
                    });
                }
                for rule in &m.artifact_rules {
                    let compiled = match rule.kind {
                        ArtifactRuleKind::FileExistsGlob => {
                            Glob::new(&rule.pattern).map(|_| ()).map_err(|e| e.to_string())
                        }
                        ArtifactRuleKind::FileContainsRegex => {
                            Regex::new(&rule.pattern).map(|_| ()).map_err(|e| e.to_string())
                        }
                    };
                    if let Err(e) = compiled {
                        return Err(TaskError::Invalid {
                            task: self.id.clone(),
                            reason: format!(
                                "artifact rule pattern `{}` does not compile: {e}",
                                rule.pattern
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Default denylist of comparative quality words that make a checkpoint
/// non-binary.
pub const DEFAULT_DENYLIST: &[&str] = &["well-structured", "clean", "readable", "good"];

/// A lint finding from checkpoint text validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointLint {
    EmptyText,
    QualitativeWording(String),
}

impl fmt::Display for CheckpointLint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointLint::EmptyText => write!(f, "checkpoint text is empty"),
            CheckpointLint::QualitativeWording(w) => {
                write!(f, "qualitative wording `{w}` is not binary-answerable")
            }
        }
    }
}

/// Lexical check that checkpoint text is phrased as a yes/no criterion,
/// using the default denylist.
pub fn validate_checkpoint_text(text: &str) -> Vec<CheckpointLint> {
    validate_checkpoint_text_with(text, DEFAULT_DENYLIST)
}

/// Same check against a caller-supplied denylist.
pub fn validate_checkpoint_text_with(text: &str, denylist: &[&str]) -> Vec<CheckpointLint> {
    if text.trim().is_empty() {
        return vec![CheckpointLint::EmptyText];
    }
    let lower = text.to_lowercase();
    let mut findings = Vec::new();
    for word in denylist {
        // word-boundary match so "goodput" does not trip on "good"
        let pattern = format!(r"\b{}\b", regex::escape(word));
        if Regex::new(&pattern).expect("denylist regex").is_match(&lower) {
            findings.push(CheckpointLint::QualitativeWording((*word).to_string()));
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_phrasing_passes() {
        assert!(validate_checkpoint_text("Does the testbench cover random inputs?").is_empty());
    }

    #[test]
    fn qualitative_wording_flagged() {
        let findings = validate_checkpoint_text("Code is well-structured");
        assert_eq!(
            findings,
            vec![CheckpointLint::QualitativeWording("well-structured".into())]
        );
    }

    #[test]
    fn empty_text_flagged() {
        assert_eq!(validate_checkpoint_text(""), vec![CheckpointLint::EmptyText]);
    }

    #[test]
    fn denylist_is_word_bounded() {
        assert!(validate_checkpoint_text("Does the design clean up state on reset?").len() == 1);
        assert!(validate_checkpoint_text("Does the module report goodput?").is_empty());
    }
}
