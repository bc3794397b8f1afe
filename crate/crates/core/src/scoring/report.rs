//! Deterministic rendering of a [`SuiteReport`] as a padded table, CSV, or
//! JSON. Equal inputs produce byte-identical output.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{
    format_cost, format_percent_2dp, format_steps_mean, SuiteReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

/// Render the report. Column order is task, difficulty, then per-model
/// score/steps/cost. Individual task scores use the integer display rule;
/// the average row uses two decimals.
pub fn render_report(report: &SuiteReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Table => render_table(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

fn header_cells(report: &SuiteReport) -> Vec<String> {
    let mut cells = vec!["task_id".to_string(), "difficulty".to_string()];
    for model in &report.models {
        cells.push(format!("{model}_score"));
        cells.push(format!("{model}_steps"));
        cells.push(format!("{model}_cost"));
    }
    cells
}

fn row_cells(report: &SuiteReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for row in &report.rows {
        let mut cells = vec![row.task_id.clone(), row.difficulty.to_string()];
        for model in &report.models {
            let s = &row.scores[model];
            cells.push(s.final_percent.to_integer().to_string());
            cells.push(s.steps.to_string());
            cells.push(format_cost(s.cost_usd));
        }
        rows.push(cells);
    }
    if !report.rows.is_empty() {
        let mut avg = vec!["average".to_string(), String::new()];
        for model in &report.models {
            let a = &report.averages[model];
            avg.push(format_percent_2dp(a.mean_score));
            avg.push(format_steps_mean(a.mean_steps));
            avg.push(format_cost(a.mean_cost));
        }
        rows.push(avg);
    }
    rows
}

fn render_csv(report: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str(&header_cells(report).join(","));
    out.push('\n');
    for row in row_cells(report) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn render_table(report: &SuiteReport) -> String {
    let header = header_cells(report);
    let rows = row_cells(report);
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        let line = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
            .collect::<Vec<_>>()
            .join("  ");
        out.push_str(line.trim_end());
        out.push('\n');
    };
    emit(&mut out, &header);
    for row in &rows {
        emit(&mut out, row);
    }

    if !report.difficulty_means.is_empty() {
        out.push('\n');
        out.push_str("difficulty means\n");
        for (model, means) in &report.difficulty_means {
            for (difficulty, mean) in means {
                writeln!(
                    out,
                    "{model}  {difficulty}  {}",
                    format_percent_2dp(mean.0)
                )
                .expect("string write");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{aggregate_suite, Fraction, RunStatus, TaskScore};
    use crate::task::Difficulty;
    use std::collections::BTreeMap;

    fn score(task: &str, pct: i64, steps: u64, cost: &str) -> TaskScore {
        TaskScore {
            task_id: task.into(),
            final_percent: Fraction::from_integer(pct),
            milestone_results: Vec::new(),
            steps,
            cost_usd: cost.parse().unwrap(),
            status: RunStatus::Completed,
        }
    }

    fn fixture_report() -> crate::scoring::SuiteReport {
        let mut scores = BTreeMap::new();
        for (model, vals) in [("alpha", [90, 80, 70]), ("beta", [60, 50, 40])] {
            let per_task: BTreeMap<String, TaskScore> = ["t1", "t2", "t3"]
                .iter()
                .zip(vals)
                .map(|(t, v)| ((*t).to_string(), score(t, v, 10, "1.00")))
                .collect();
            scores.insert(model.to_string(), per_task);
        }
        let difficulties = ["t1", "t2", "t3"]
            .iter()
            .map(|t| ((*t).to_string(), Difficulty::Easy))
            .collect();
        aggregate_suite(&scores, &difficulties).unwrap()
    }

    #[test]
    fn empty_csv_is_header_only() {
        let report = aggregate_suite(&BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(render_report(&report, ReportFormat::Csv), "task_id,difficulty\n");
    }

    #[test]
    fn csv_has_data_rows_plus_average() {
        let csv = render_report(&fixture_report(), ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5); // header + 3 tasks + average
        assert_eq!(
            lines[0],
            "task_id,difficulty,alpha_score,alpha_steps,alpha_cost,beta_score,beta_steps,beta_cost"
        );
        assert_eq!(lines[1], "t1,easy,90,10,1.00,60,10,1.00");
        assert_eq!(lines[4], "average,,80.00,10,1.00,50.00,10,1.00");
    }

    #[test]
    fn table_uses_spaces_not_tabs() {
        let table = render_report(&fixture_report(), ReportFormat::Table);
        assert!(!table.contains('\t'));
        assert!(table.contains("difficulty means"));
    }

    #[test]
    fn json_round_trips() {
        let report = fixture_report();
        let json = render_report(&report, ReportFormat::Json);
        let back: crate::scoring::SuiteReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn rendering_is_deterministic() {
        let report = fixture_report();
        for fmt in [ReportFormat::Table, ReportFormat::Csv, ReportFormat::Json] {
            assert_eq!(render_report(&report, fmt), render_report(&report, fmt));
        }
    }
}
