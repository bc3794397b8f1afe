//! Grading a finished workspace: evidence collection, LLM-judge verdicts,
//! script execution, artifact rules, and the human-review packet.
//!
//! Grading is conservative throughout: a verdict is never fabricated as
//! passed, and an infrastructure failure yields an *ungraded* milestone —
//! surfaced explicitly, never silently scored as zero.

mod evidence;
mod judge;

pub use evidence::{collect_evidence, EvidenceBundle, FileEntry, IncludedFile};
pub use judge::{check_artifact_milestone, judge_milestone, run_script_milestone};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gateway::{ChatBackend, GatewayError, ModelProfile};
use crate::scoring::MilestoneResult;
use crate::task::{MilestoneKind, TaskSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("workspace missing: {0}")]
    WorkspaceMissing(PathBuf),
    #[error("model provider: {0}")]
    Provider(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Judge setup: a pinned model plus evidence-collection policy.
#[derive(Debug, Clone)]
pub struct JudgeConfig {
    /// The judge model, pinned for consistency across a benchmark run.
    pub profile: ModelProfile,
    /// Serialized-evidence budget per judged task.
    pub max_workspace_bytes: usize,
    pub include_globs: Vec<String>,
    /// Excluded subtrees; metrics reports and final GDS files are re-included
    /// from under them.
    pub exclude_globs: Vec<String>,
    pub retries_on_parse_failure: u32,
    /// Timeout for script milestones.
    pub script_timeout: std::time::Duration,
}

impl JudgeConfig {
    pub fn new(profile: ModelProfile) -> Self {
        assert!(!profile.model_id.is_empty(), "judge model id must be pinned");
        JudgeConfig {
            profile,
            max_workspace_bytes: 256 * 1024,
            include_globs: vec!["**/*".into()],
            exclude_globs: vec!["sim_build/**".into(), "runs/**".into(), ".git/**".into()],
            retries_on_parse_failure: 1,
            script_timeout: std::time::Duration::from_secs(600),
        }
    }
}

/// Outcome of grading one milestone.
#[derive(Debug, Clone, PartialEq)]
pub enum MilestoneGrade {
    Graded(MilestoneResult),
    /// Grading infrastructure failed; explicitly not a zero.
    Ungraded { milestone_id: String, reason: String },
}

/// Everything `evaluate_task` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEvaluation {
    pub grades: Vec<MilestoneGrade>,
    /// Judge parse-failure retries spent across all milestones.
    pub judge_retries: u32,
}

impl TaskEvaluation {
    /// All milestone results when fully graded; `None` if any milestone is
    /// ungraded (the task then has no final score).
    pub fn completed_results(&self) -> Option<Vec<MilestoneResult>> {
        self.grades
            .iter()
            .map(|g| match g {
                MilestoneGrade::Graded(r) => Some(r.clone()),
                MilestoneGrade::Ungraded { .. } => None,
            })
            .collect()
    }

    pub fn ungraded(&self) -> Vec<(&str, &str)> {
        self.grades
            .iter()
            .filter_map(|g| match g {
                MilestoneGrade::Ungraded { milestone_id, reason } => {
                    Some((milestone_id.as_str(), reason.as_str()))
                }
                _ => None,
            })
            .collect()
    }
}

/// Grade every milestone of a task against a finished workspace.
///
/// Milestones are evaluated in declared order; judge milestones share one
/// evidence bundle collected up front. Judge provider failures mark the
/// milestone ungraded and evaluation continues.
pub fn evaluate_task(
    task: &TaskSpec,
    workspace: &Path,
    backend: &dyn ChatBackend,
    config: &JudgeConfig,
) -> Result<TaskEvaluation, EvalError> {
    if !workspace.is_dir() {
        return Err(EvalError::WorkspaceMissing(workspace.to_path_buf()));
    }
    let needs_judge = task
        .milestones
        .iter()
        .any(|m| m.kind == MilestoneKind::Judge);
    let evidence = if needs_judge {
        Some(collect_evidence(workspace, config)?)
    } else {
        None
    };

    let mut grades = Vec::with_capacity(task.milestones.len());
    let mut judge_retries = 0;
    for milestone in &task.milestones {
        let grade = match milestone.kind {
            MilestoneKind::Judge => {
                let bundle = evidence.as_ref().expect("evidence collected for judge");
                match judge_milestone(milestone, bundle, backend, config) {
                    Ok((result, retries)) => {
                        judge_retries += retries;
                        MilestoneGrade::Graded(result)
                    }
                    Err(e) => MilestoneGrade::Ungraded {
                        milestone_id: milestone.id.clone(),
                        reason: e.to_string(),
                    },
                }
            }
            MilestoneKind::Script => {
                MilestoneGrade::Graded(run_script_milestone(milestone, workspace, config))
            }
            MilestoneKind::Artifact => {
                MilestoneGrade::Graded(check_artifact_milestone(milestone, workspace))
            }
        };
        grades.push(grade);
    }
    Ok(TaskEvaluation {
        grades,
        judge_retries,
    })
}

/// Render the self-contained review packet for human judge-reliability
/// review: checkpoints, verdicts, rationales, and evidence excerpts.
pub fn review_bundle(
    task: &TaskSpec,
    evidence: Option<&EvidenceBundle>,
    evaluation: &TaskEvaluation,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Review packet: {} ({})\n\n", task.title, task.id));
    for (milestone, grade) in task.milestones.iter().zip(&evaluation.grades) {
        out.push_str(&format!(
            "## Milestone {} — {} (weight {})\n\n",
            milestone.id, milestone.name, milestone.weight
        ));
        match grade {
            MilestoneGrade::Graded(result) => {
                out.push_str(&format!(
                    "Score: {}/{}\n\n",
                    result.earned_points, result.total_points
                ));
                for verdict in &result.verdicts {
                    out.push_str(&format!(
                        "- {}: {} — {}\n",
                        verdict.checkpoint_id,
                        if verdict.passed { "YES" } else { "NO" },
                        verdict.rationale.lines().next().unwrap_or("")
                    ));
                }
            }
            MilestoneGrade::Ungraded { reason, .. } => {
                out.push_str(&format!("UNGRADED: {reason}\n"));
            }
        }
        out.push('\n');
    }
    if let Some(bundle) = evidence {
        out.push_str("## Evidence manifest\n\n");
        for entry in &bundle.manifest {
            out.push_str(&format!(
                "- {} ({} bytes{})\n",
                entry.path,
                entry.size,
                if entry.binary { ", binary" } else { "" }
            ));
        }
    }
    out
}
