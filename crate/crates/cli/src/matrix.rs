//! Score-matrix injection: load a CSV of already-graded per-task scores and
//! feed it straight into suite aggregation, so published result tables can
//! be reproduced without any model access.
//!
//! Wide CSV layout, mirroring the suite report:
//! `task_id,difficulty,<model>_score,<model>_steps,<model>_cost,...`

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use chipbench_core::scoring::{Fraction, RunStatus, TaskScore};
use chipbench_core::task::Difficulty;

pub struct ScoreMatrix {
    /// model id -> task id -> score
    pub scores: BTreeMap<String, BTreeMap<String, TaskScore>>,
    pub difficulties: BTreeMap<String, Difficulty>,
}

/// Parse a decimal literal like `71.45` into an exact fraction.
pub fn fraction_from_decimal(s: &str) -> Result<Fraction> {
    let s = s.trim();
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, s),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        bail!("empty numeric field");
    }
    let denom = 10i64
        .checked_pow(frac_part.len() as u32)
        .context("too many decimal places")?;
    let int_val: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().with_context(|| format!("bad number `{s}`"))?
    };
    let frac_val: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().with_context(|| format!("bad number `{s}`"))?
    };
    Ok(Fraction::new(sign * (int_val * denom + frac_val), denom))
}

pub fn load_matrix(path: &Path) -> Result<ScoreMatrix> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading score matrix {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("score matrix is empty")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 5 || cols[0] != "task_id" || cols[1] != "difficulty" {
        bail!("score matrix header must start with task_id,difficulty followed by model columns");
    }
    // model column groups: <model>_score,<model>_steps,<model>_cost
    let mut models = Vec::new();
    let mut i = 2;
    while i < cols.len() {
        let model = cols[i]
            .strip_suffix("_score")
            .with_context(|| format!("expected `<model>_score` column, found `{}`", cols[i]))?;
        let steps_col = format!("{model}_steps");
        let cost_col = format!("{model}_cost");
        if cols.get(i + 1) != Some(&steps_col.as_str())
            || cols.get(i + 2) != Some(&cost_col.as_str())
        {
            bail!("columns for model `{model}` must be score,steps,cost in order");
        }
        models.push(model.to_string());
        i += 3;
    }

    let mut scores: BTreeMap<String, BTreeMap<String, TaskScore>> = BTreeMap::new();
    let mut difficulties = BTreeMap::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            bail!("row `{line}` has {} fields, expected {}", fields.len(), cols.len());
        }
        let task_id = fields[0].to_string();
        let difficulty: Difficulty = fields[1]
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))
            .with_context(|| format!("task `{task_id}`"))?;
        difficulties.insert(task_id.clone(), difficulty);
        for (m, model) in models.iter().enumerate() {
            let base = 2 + m * 3;
            let score = TaskScore {
                task_id: task_id.clone(),
                final_percent: fraction_from_decimal(fields[base])?,
                milestone_results: Vec::new(),
                steps: fields[base + 1]
                    .parse()
                    .with_context(|| format!("steps for {task_id}/{model}"))?,
                cost_usd: fields[base + 2]
                    .parse()
                    .with_context(|| format!("cost for {task_id}/{model}"))?,
                status: RunStatus::Completed,
            };
            scores
                .entry(model.clone())
                .or_default()
                .insert(task_id.clone(), score);
        }
    }
    if scores.is_empty() {
        bail!("score matrix has no data rows");
    }
    Ok(ScoreMatrix {
        scores,
        difficulties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_fractions_are_exact() {
        assert_eq!(fraction_from_decimal("88").unwrap(), Fraction::from_integer(88));
        assert_eq!(fraction_from_decimal("60.8").unwrap(), Fraction::new(608, 10));
        assert_eq!(fraction_from_decimal("71.45").unwrap(), Fraction::new(7145, 100));
        assert!(fraction_from_decimal("").is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let tmp = tempfile::TempDir::new().unwrap();
        let path = tmp.path().join("m.csv");
        std::fs::write(
            &path,
            "task_id,difficulty,a_score,a_steps,a_cost,b_score,b_steps,b_cost\n\
             t1,easy,90,10,1.00,50,12,0.50\n\
             t2,hard,70,20,2.00,30,22,0.75\n",
        )
        .unwrap();
        let matrix = load_matrix(&path).unwrap();
        assert_eq!(matrix.scores.len(), 2);
        assert_eq!(matrix.scores["a"]["t1"].final_percent, Fraction::from_integer(90));
        assert_eq!(matrix.difficulties["t2"], chipbench_core::task::Difficulty::Hard);
    }

    #[test]
    fn malformed_headers_rejected() {
        let tmp = tempfile::TempDir::new().unwrap();
        let path = tmp.path().join("m.csv");
        std::fs::write(&path, "task,diff,a_score\n").unwrap();
        assert!(load_matrix(&path).is_err());
    }
}
