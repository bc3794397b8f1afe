//! Checkpoint points -> milestone fractions -> weighted task percent -> suite
//! aggregation.
//!
//! All scoring arithmetic is exact rational; rounding happens only when a
//! value is formatted for display. Two display conventions are used:
//! truncation to integer percent for a single task, and two-decimal half-up
//! for aggregate tables. Both are named constants here so nothing else in the
//! codebase re-derives them.

mod report;

pub use report::{render_report, ReportFormat};

use std::collections::BTreeMap;

use num_rational::Ratio;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{Difficulty, Milestone, TaskSpec};

/// Exact fraction type used throughout scoring.
pub type Fraction = Ratio<i64>;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("checkpoint `{0}` has no verdict")]
    MissingVerdict(String),
    #[error("verdict references unknown checkpoint `{0}`")]
    UnknownCheckpointId(String),
    #[error("checkpoint `{0}` has more than one verdict")]
    DuplicateVerdict(String),
    #[error("milestone results do not match task milestones: {0}")]
    MilestoneMismatch(String),
    #[error("models graded different task sets: {0}")]
    RaggedMatrix(String),
    #[error("task `{0}` has no difficulty label")]
    UnknownDifficulty(String),
}

/// Where a checkpoint verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Judge,
    Script,
    Artifact,
}

/// One binary pass/fail decision for a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointVerdict {
    pub checkpoint_id: String,
    pub passed: bool,
    pub rationale: String,
    pub source: VerdictSource,
}

/// Graded outcome of a single milestone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneResult {
    pub milestone_id: String,
    pub earned_points: u32,
    pub total_points: u32,
    pub verdicts: Vec<CheckpointVerdict>,
}

impl MilestoneResult {
    /// earned/total as an exact rational in [0, 1].
    pub fn fraction(&self) -> Fraction {
        Fraction::new(self.earned_points as i64, self.total_points as i64)
    }
}

/// How a run terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
    Error,
}

/// Final graded output for one (task, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    /// Weighted sum of milestone fractions, in percent units. Exact.
    #[serde(with = "ratio_serde")]
    pub final_percent: Fraction,
    pub milestone_results: Vec<MilestoneResult>,
    pub steps: u64,
    pub cost_usd: Decimal,
    pub status: RunStatus,
}

mod ratio_serde {
    use super::Fraction;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Fraction, s: S) -> Result<S::Ok, S::Error> {
        (*r.numer(), *r.denom()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Fraction, D::Error> {
        let (n, den) = <(i64, i64)>::deserialize(d)?;
        if den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Fraction::new(n, den))
    }
}

/// Per-model aggregate statistics over a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAverages {
    #[serde(with = "ratio_serde")]
    pub mean_score: Fraction,
    #[serde(with = "ratio_serde")]
    pub mean_steps: Fraction,
    pub mean_cost: Decimal,
}

/// One row of the suite table: a task graded by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub task_id: String,
    pub difficulty: Difficulty,
    /// Keyed by model id; same key set on every row.
    pub scores: BTreeMap<String, TaskScore>,
}

/// Full cross-model comparison table plus difficulty-bucket means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub models: Vec<String>,
    pub averages: BTreeMap<String, ModelAverages>,
    /// (model, difficulty) -> unweighted mean of final_percent.
    pub difficulty_means: BTreeMap<String, BTreeMap<Difficulty, FractionBox>>,
}

/// Serializable wrapper so `Fraction` can sit in map values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionBox(#[serde(with = "ratio_serde")] pub Fraction);

/// Score a judge-kind milestone from its checkpoint verdicts.
///
/// Every checkpoint must have exactly one verdict; earned = sum of points of
/// passed checkpoints.
pub fn score_milestone(
    milestone: &Milestone,
    verdicts: &[CheckpointVerdict],
) -> Result<MilestoneResult, ScoringError> {
    let mut seen: BTreeMap<&str, &CheckpointVerdict> = BTreeMap::new();
    for v in verdicts {
        if !milestone
            .checkpoints
            .iter()
            .any(|c| c.id == v.checkpoint_id)
        {
            return Err(ScoringError::UnknownCheckpointId(v.checkpoint_id.clone()));
        }
        if seen.insert(&v.checkpoint_id, v).is_some() {
            return Err(ScoringError::DuplicateVerdict(v.checkpoint_id.clone()));
        }
    }
    let mut earned = 0u32;
    let mut total = 0u32;
    let mut ordered = Vec::with_capacity(milestone.checkpoints.len());
    for cp in &milestone.checkpoints {
        let v = seen
            .get(cp.id.as_str())
            .ok_or_else(|| ScoringError::MissingVerdict(cp.id.clone()))?;
        total += cp.points;
        if v.passed {
            earned += cp.points;
        }
        ordered.push((*v).clone());
    }
    Ok(MilestoneResult {
        milestone_id: milestone.id.clone(),
        earned_points: earned,
        total_points: total,
        verdicts: ordered,
    })
}

/// Combine milestone results into the weighted task percent.
///
/// Results must be in task order, one per milestone. The weighted sum stays
/// rational; see [`format_task_percent`] for the display rule.
pub fn score_task(
    task: &TaskSpec,
    milestone_results: Vec<MilestoneResult>,
    steps: u64,
    cost_usd: Decimal,
    status: RunStatus,
) -> Result<TaskScore, ScoringError> {
    if milestone_results.len() != task.milestones.len() {
        return Err(ScoringError::MilestoneMismatch(format!(
            "expected {} results, got {}",
            task.milestones.len(),
            milestone_results.len()
        )));
    }
    let mut final_percent = Fraction::new(0, 1);
    for (m, r) in task.milestones.iter().zip(&milestone_results) {
        if m.id != r.milestone_id {
            return Err(ScoringError::MilestoneMismatch(format!(
                "result `{}` does not match milestone `{}`",
                r.milestone_id, m.id
            )));
        }
        final_percent += Fraction::from_integer(m.weight as i64) * r.fraction();
    }
    Ok(TaskScore {
        task_id: task.id.clone(),
        final_percent,
        milestone_results,
        steps,
        cost_usd,
        status,
    })
}

/// Build the cross-model suite report.
///
/// `scores` maps model id -> (task id -> score). All models must cover the
/// same task set; gaps are an error rather than NaN padding.
pub fn aggregate_suite(
    scores: &BTreeMap<String, BTreeMap<String, TaskScore>>,
    difficulties: &BTreeMap<String, Difficulty>,
) -> Result<SuiteReport, ScoringError> {
    let models: Vec<String> = scores.keys().cloned().collect();
    let mut task_ids: Option<Vec<&String>> = None;
    for (model, per_task) in scores {
        let ids: Vec<&String> = per_task.keys().collect();
        match &task_ids {
            None => task_ids = Some(ids),
            Some(expected) if *expected != ids => {
                return Err(ScoringError::RaggedMatrix(format!(
                    "model `{model}` graded a different task set"
                )));
            }
            Some(_) => {}
        }
    }
    let task_ids = task_ids.unwrap_or_default();

    let mut rows = Vec::new();
    for id in &task_ids {
        let difficulty = *difficulties
            .get(id.as_str())
            .ok_or_else(|| ScoringError::UnknownDifficulty((*id).clone()))?;
        let mut per_model = BTreeMap::new();
        for model in &models {
            per_model.insert(model.clone(), scores[model][id.as_str()].clone());
        }
        rows.push(SuiteRow {
            task_id: (*id).clone(),
            difficulty,
            scores: per_model,
        });
    }

    let mut averages = BTreeMap::new();
    let mut difficulty_means = BTreeMap::new();
    for model in &models {
        let col: Vec<&TaskScore> = rows.iter().map(|r| &r.scores[model]).collect();
        if !col.is_empty() {
            let n = col.len() as i64;
            let mean_score = col
                .iter()
                .map(|s| s.final_percent)
                .sum::<Fraction>()
                / Fraction::from_integer(n);
            let mean_steps = Fraction::new(col.iter().map(|s| s.steps as i64).sum::<i64>(), n);
            let mean_cost = col.iter().map(|s| s.cost_usd).sum::<Decimal>()
                / Decimal::from(col.len() as u64);
            averages.insert(
                model.clone(),
                ModelAverages {
                    mean_score,
                    mean_steps,
                    mean_cost,
                },
            );
        }

        let mut buckets: BTreeMap<Difficulty, Vec<Fraction>> = BTreeMap::new();
        for row in &rows {
            buckets
                .entry(row.difficulty)
                .or_default()
                .push(row.scores[model].final_percent);
        }
        let means: BTreeMap<Difficulty, FractionBox> = buckets
            .into_iter()
            .map(|(d, vals)| {
                let n = vals.len() as i64;
                let mean = vals.into_iter().sum::<Fraction>() / Fraction::from_integer(n);
                (d, FractionBox(mean))
            })
            .collect();
        difficulty_means.insert(model.clone(), means);
    }

    Ok(SuiteReport {
        rows,
        models,
        averages,
        difficulty_means,
    })
}

/// Unweighted per-(model, difficulty) means, as a standalone view.
pub fn difficulty_means(
    scores: &BTreeMap<String, BTreeMap<String, TaskScore>>,
    difficulties: &BTreeMap<String, Difficulty>,
) -> Result<BTreeMap<String, BTreeMap<Difficulty, FractionBox>>, ScoringError> {
    Ok(aggregate_suite(scores, difficulties)?.difficulty_means)
}

/// Single-task display rule: truncate toward zero to integer percent.
///
/// Reproduces the reported "93%" from the exact 93.571...%.
pub fn format_task_percent(percent: Fraction) -> String {
    format!("{}%", percent.to_integer())
}

/// Aggregate display rule: two decimal places, half-up.
pub fn format_percent_2dp(value: Fraction) -> String {
    let scaled = value * Fraction::from_integer(100);
    // half-up on a non-negative rational: floor(x + 1/2)
    let rounded = (scaled + Fraction::new(1, 2)).floor().to_integer();
    format!("{}.{:02}", rounded / 100, rounded % 100)
}

/// Steps display rule: nearest integer, half-up.
pub fn format_steps_mean(value: Fraction) -> String {
    let rounded = (value + Fraction::new(1, 2)).floor().to_integer();
    format!("{rounded}")
}

/// Cost display rule: two decimal places, half-up.
pub fn format_cost(value: Decimal) -> String {
    value
        .round_dp_with_strategy(2, rust_decimal::RoundingStrategy::MidpointAwayFromZero)
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Checkpoint, MilestoneKind, RunLimits};
    use rust_decimal::Decimal;

    fn judge_milestone(id: &str, weight: u32, points: &[u32]) -> Milestone {
        Milestone {
            id: id.into(),
            name: id.into(),
            weight,
            kind: MilestoneKind::Judge,
            checkpoints: points
                .iter()
                .enumerate()
                .map(|(i, &p)| Checkpoint {
                    id: format!("{id}_{i}"),
                    text: format!("Does the code satisfy criterion {i}?"),
                    points: p,
                })
                .collect(),
            script: None,
            artifact_rules: Vec::new(),
        }
    }

    fn verdicts(m: &Milestone, passed: &[bool]) -> Vec<CheckpointVerdict> {
        m.checkpoints
            .iter()
            .zip(passed)
            .map(|(c, &p)| CheckpointVerdict {
                checkpoint_id: c.id.clone(),
                passed: p,
                rationale: String::new(),
                source: VerdictSource::Judge,
            })
            .collect()
    }

    fn multiplier_task() -> TaskSpec {
        TaskSpec {
            id: "pipelined_multiplier".into(),
            title: "Pipelined multiplier".into(),
            prompt: "implement".into(),
            difficulty: Difficulty::Medium,
            milestones: vec![
                judge_milestone("main_module", 15, &[1, 1, 1, 1, 1, 1, 1]),
                judge_milestone("testbench", 15, &[1, 1, 1, 1, 1, 1]),
                judge_milestone("testbench_execution", 20, &[1]),
                judge_milestone("openlane_flow", 50, &[1, 1]),
            ],
            workspace_seed: Vec::new(),
            limits: RunLimits::default(),
        }
    }

    fn result(id: &str, earned: u32, total: u32) -> MilestoneResult {
        MilestoneResult {
            milestone_id: id.into(),
            earned_points: earned,
            total_points: total,
            verdicts: Vec::new(),
        }
    }

    #[test]
    fn milestone_four_of_seven() {
        let m = judge_milestone("main_module", 15, &[1, 1, 1, 1, 1, 1, 1]);
        let vs = verdicts(&m, &[true, true, false, false, true, false, true]);
        let r = score_milestone(&m, &vs).unwrap();
        assert_eq!(r.fraction(), Fraction::new(4, 7));
    }

    #[test]
    fn milestone_all_failed_is_zero() {
        let m = judge_milestone("m", 10, &[1, 2, 3]);
        let r = score_milestone(&m, &verdicts(&m, &[false, false, false])).unwrap();
        assert_eq!(r.fraction(), Fraction::new(0, 1));
    }

    #[test]
    fn milestone_all_passed_is_one() {
        let m = judge_milestone("testbench", 15, &[1, 1, 1, 1, 1, 1]);
        let r = score_milestone(&m, &verdicts(&m, &[true; 6])).unwrap();
        assert_eq!(r.fraction(), Fraction::new(1, 1));
        assert_eq!(r.earned_points, 6);
        assert_eq!(r.total_points, 6);
    }

    #[test]
    fn milestone_missing_and_duplicate_verdicts() {
        let m = judge_milestone("m", 10, &[1, 1]);
        let mut vs = verdicts(&m, &[true, true]);
        let extra = vs[0].clone();
        assert!(matches!(
            score_milestone(&m, &vs[..1]),
            Err(ScoringError::MissingVerdict(_))
        ));
        vs.push(extra);
        assert!(matches!(
            score_milestone(&m, &vs),
            Err(ScoringError::DuplicateVerdict(_))
        ));
        let mut unknown = verdicts(&m, &[true, true]);
        unknown[0].checkpoint_id = "nope".into();
        assert!(matches!(
            score_milestone(&m, &unknown),
            Err(ScoringError::UnknownCheckpointId(_))
        ));
    }

    #[test]
    fn task_score_reproduces_reported_percent() {
        let task = multiplier_task();
        let results = vec![
            result("main_module", 4, 7),
            result("testbench", 6, 6),
            result("testbench_execution", 1, 1),
            result("openlane_flow", 2, 2),
        ];
        let score = score_task(&task, results, 30, Decimal::ZERO, RunStatus::Completed).unwrap();
        // 4/7*15 + 15 + 20 + 50 = 655/7
        assert_eq!(score.final_percent, Fraction::new(655, 7));
        assert_eq!(format_task_percent(score.final_percent), "93%");
    }

    #[test]
    fn task_score_extremes() {
        let task = multiplier_task();
        let all = |f: u32| {
            vec![
                result("main_module", 7 * f, 7),
                result("testbench", 6 * f, 6),
                result("testbench_execution", f, 1),
                result("openlane_flow", 2 * f, 2),
            ]
        };
        let full = score_task(&task, all(1), 0, Decimal::ZERO, RunStatus::Completed).unwrap();
        assert_eq!(full.final_percent, Fraction::from_integer(100));
        let zero = score_task(&task, all(0), 0, Decimal::ZERO, RunStatus::Completed).unwrap();
        assert_eq!(zero.final_percent, Fraction::from_integer(0));
    }

    #[test]
    fn task_score_rejects_mismatched_results() {
        let task = multiplier_task();
        assert!(matches!(
            score_task(&task, vec![], 0, Decimal::ZERO, RunStatus::Completed),
            Err(ScoringError::MilestoneMismatch(_))
        ));
    }

    #[test]
    fn display_rules() {
        assert_eq!(format_percent_2dp(Fraction::new(1216, 20)), "60.80");
        assert_eq!(format_percent_2dp(Fraction::new(1429, 20)), "71.45");
        assert_eq!(format_steps_mean(Fraction::new(73, 2)), "37");
        assert_eq!(format_cost(Decimal::new(9818, 2) / Decimal::from(20)), "4.91");
    }
}
