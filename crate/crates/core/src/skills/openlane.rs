//! Physical-flow skills: run the RTL-to-GDS flow, read its metrics report,
//! and diagnose failed runs with a model's help.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::Value;
use walkdir::WalkDir;

use crate::gateway::{chat, ChatBackend, ChatMessage, DecodeParams, ModelProfile};
use crate::sandbox::run_command_with_timeout;

use super::SkillError;

/// Keys the flow config must define.
pub const REQUIRED_CONFIG_KEYS: [&str; 4] =
    ["DESIGN_NAME", "VERILOG_FILES", "CLOCK_PORT", "CLOCK_PERIOD"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowResult {
    pub success: bool,
    pub run_dir: PathBuf,
    pub final_gds: Option<PathBuf>,
    pub log_tail: String,
}

/// What the mock flow driver should fabricate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowOutcome {
    Succeed {
        /// Whether to write the final GDS file (a run can "pass" its driver
        /// yet still be judged failed when the GDS is absent).
        emit_gds: bool,
        /// Metrics CSV to copy into the fabricated run's reports.
        metrics_fixture: Option<PathBuf>,
    },
    FailAt { stage: String, log_excerpt: String },
}

#[derive(Debug, Clone)]
pub enum FlowDriver {
    /// Spawn `argv` with `{config}` replaced by the config path; the run
    /// directory is discovered under the runs root afterwards.
    Real { argv: Vec<String> },
    Mock { outcome: FlowOutcome },
}

fn validate_config(config_path: &Path) -> Result<String, SkillError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|_| SkillError::FileMissing(config_path.to_path_buf()))?;
    let config: Value = serde_json::from_str(&text)
        .map_err(|e| SkillError::ParserError(format!("flow config is not valid JSON: {e}")))?;
    for key in REQUIRED_CONFIG_KEYS {
        if config.get(key).is_none() {
            return Err(SkillError::ConfigInvalid { key: key.into() });
        }
    }
    Ok(config["DESIGN_NAME"]
        .as_str()
        .unwrap_or("design")
        .to_string())
}

fn find_gds(run_dir: &Path) -> Option<PathBuf> {
    let gds_dir = run_dir.join("results/final/gds");
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(&gds_dir)
        .ok()?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "gds"))
        .collect();
    candidates.sort();
    candidates.into_iter().next()
}

/// Next run directory name under the runs root. Sequential, not
/// timestamped, so repeated replays produce identical trees.
fn next_run_dir(runs_root: &Path) -> PathBuf {
    let existing = std::fs::read_dir(runs_root)
        .map(|entries| entries.flatten().count())
        .unwrap_or(0);
    runs_root.join(format!("RUN_{:03}", existing + 1))
}

/// Execute the flow for a config file. Success is determined by GDS presence
/// on disk, never trusted from the driver's exit status alone.
pub fn run_openlane(
    config_path: &Path,
    runs_root: &Path,
    driver: &FlowDriver,
    timeout: Duration,
) -> Result<FlowResult, SkillError> {
    let design = validate_config(config_path)?;
    std::fs::create_dir_all(runs_root)?;
    match driver {
        FlowDriver::Mock { outcome } => {
            let run_dir = next_run_dir(runs_root);
            std::fs::create_dir_all(run_dir.join("logs"))?;
            match outcome {
                FlowOutcome::Succeed {
                    emit_gds,
                    metrics_fixture,
                } => {
                    let log_tail = "OpenLane ran successfully.".to_string();
                    std::fs::write(run_dir.join("logs/flow.log"), &log_tail)?;
                    if let Some(fixture) = metrics_fixture {
                        std::fs::create_dir_all(run_dir.join("reports"))?;
                        std::fs::copy(fixture, run_dir.join("reports/metrics.csv"))?;
                    }
                    if *emit_gds {
                        let gds_dir = run_dir.join("results/final/gds");
                        std::fs::create_dir_all(&gds_dir)?;
                        std::fs::write(
                            gds_dir.join(format!("{design}.gds")),
                            format!("GDS placeholder for {design}\n"),
                        )?;
                    }
                    let final_gds = find_gds(&run_dir);
                    Ok(FlowResult {
                        success: final_gds.is_some(),
                        run_dir,
                        final_gds,
                        log_tail,
                    })
                }
                FlowOutcome::FailAt { stage, log_excerpt } => {
                    let log_tail = format!("[ERROR] flow failed at stage {stage}: {log_excerpt}");
                    std::fs::write(run_dir.join(format!("logs/{stage}.log")), &log_tail)?;
                    Err(SkillError::FlowFailed { run_dir, log_tail })
                }
            }
        }
        FlowDriver::Real { argv } => {
            let argv: Vec<String> = argv
                .iter()
                .map(|a| a.replace("{config}", &config_path.to_string_lossy()))
                .collect();
            let (program, rest) = argv
                .split_first()
                .ok_or_else(|| SkillError::ToolMissing("<empty argv>".into(), String::new()))?;
            let mut cmd = std::process::Command::new(program);
            cmd.args(rest).current_dir(runs_root);
            let outcome = run_command_with_timeout(cmd, timeout)?;
            if outcome.timed_out {
                return Err(SkillError::Timeout(timeout));
            }
            let mut runs: Vec<PathBuf> = std::fs::read_dir(runs_root)?
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.is_dir())
                .collect();
            runs.sort();
            let run_dir = runs
                .pop()
                .ok_or_else(|| SkillError::MetricsMissing(runs_root.to_path_buf()))?;
            let log_tail = format!("{}{}", outcome.stdout, outcome.stderr);
            if outcome.exit_code != 0 {
                return Err(SkillError::FlowFailed { run_dir, log_tail });
            }
            let final_gds = find_gds(&run_dir);
            Ok(FlowResult {
                success: final_gds.is_some(),
                run_dir,
                final_gds,
                log_tail,
            })
        }
    }
}

/// Ordered `metric,value` table from a flow run's metrics report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    entries: Vec<(String, String)>,
    /// (1-based line number, content) of lines that failed to parse.
    pub malformed: Vec<(usize, String)>,
}

/// Worst-case timing/area/signoff numbers pulled from the canonical keys.
#[derive(Debug, Clone, PartialEq)]
pub struct PpaSummary {
    pub setup_worst_slack_ns: Option<f64>,
    pub hold_worst_slack_ns: Option<f64>,
    pub die_area_um2: Option<f64>,
    pub core_area_um2: Option<f64>,
    pub drc_errors: Option<i64>,
    pub lvs_errors: Option<i64>,
}

impl MetricsTable {
    /// Parse `metric,value` lines, preserving order. An optional
    /// `Metric,Value` header is skipped; malformed or duplicate-key lines
    /// are collected and parsing continues.
    pub fn parse(raw: &str) -> MetricsTable {
        let mut table = MetricsTable::default();
        for (i, line) in raw.lines().enumerate() {
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || (lineno == 1 && trimmed.eq_ignore_ascii_case("metric,value"))
            {
                continue;
            }
            match trimmed.split_once(',') {
                Some((key, value)) if !key.is_empty() => {
                    if table.get(key).is_some() {
                        table.malformed.push((lineno, format!("duplicate key: {trimmed}")));
                    } else {
                        table.entries.push((key.to_string(), value.to_string()));
                    }
                }
                _ => table.malformed.push((lineno, trimmed.to_string())),
            }
        }
        table
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Integer accessor for count-style metrics; fails loudly rather than
    /// defaulting when the value doesn't parse.
    pub fn get_count(&self, key: &str) -> Result<Option<i64>, SkillError> {
        self.typed(key, |v| v.parse::<i64>().ok())
    }

    /// Real-valued accessor for timing (ns) and area (µm²) metrics.
    pub fn get_real(&self, key: &str) -> Result<Option<f64>, SkillError> {
        self.typed(key, |v| v.parse::<f64>().ok())
    }

    fn typed<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>, SkillError> {
        match self.get(key) {
            None => Ok(None),
            Some(value) => parse(value).map(Some).ok_or_else(|| {
                SkillError::MetricUnparseable {
                    key: key.to_string(),
                    value: value.to_string(),
                }
            }),
        }
    }

    /// The PPA roll-up over the canonical key names. Errors with
    /// [`SkillError::AllMissing`] when none of the keys are present.
    pub fn ppa_summary(&self) -> Result<PpaSummary, SkillError> {
        let lvs_keys = [
            "design__lvs_device_difference__count",
            "design__lvs_net_difference__count",
            "design__lvs_property_fail__count",
        ];
        let mut lvs_errors = None;
        for key in lvs_keys {
            if let Some(n) = self.get_count(key)? {
                *lvs_errors.get_or_insert(0) += n;
            }
        }
        let summary = PpaSummary {
            setup_worst_slack_ns: self.get_real("timing__setup__ws")?,
            hold_worst_slack_ns: self.get_real("timing__hold__ws")?,
            die_area_um2: self.get_real("design__die__area")?,
            core_area_um2: self.get_real("design__core__area")?,
            drc_errors: self.get_count("magic__drc_error__count")?,
            lvs_errors,
        };
        let all_missing = summary.setup_worst_slack_ns.is_none()
            && summary.hold_worst_slack_ns.is_none()
            && summary.die_area_um2.is_none()
            && summary.core_area_um2.is_none()
            && summary.drc_errors.is_none()
            && summary.lvs_errors.is_none();
        if all_missing {
            return Err(SkillError::AllMissing);
        }
        Ok(summary)
    }
}

/// Read the metrics table of the latest flow run under `run_root`.
///
/// The root may be a workspace, a runs directory, or a single run directory;
/// the latest (lexicographically last) `metrics.csv` beneath it wins.
pub fn view_openlane_metrics(run_root: &Path) -> Result<MetricsTable, SkillError> {
    let mut reports: Vec<PathBuf> = WalkDir::new(run_root)
        .sort_by_file_name()
        .into_iter()
        .flatten()
        .filter(|e| e.file_type().is_file() && e.file_name() == "metrics.csv")
        .map(|e| e.into_path())
        .collect();
    let report = reports
        .pop()
        .ok_or_else(|| SkillError::MetricsMissing(run_root.to_path_buf()))?;
    Ok(MetricsTable::parse(&std::fs::read_to_string(report)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowDiagnosis {
    pub failing_stage: String,
    /// Ranked, most likely first.
    pub suspected_causes: Vec<String>,
    /// Verbatim excerpts from the analyzed logs (verified by containment).
    pub evidence: Vec<String>,
    pub suggested_fixes: Vec<String>,
    /// Evidence lines the model cited that were not actually in the logs.
    pub dropped_evidence: usize,
}

const DIAGNOSIS_LOG_TAIL_BYTES: usize = 4096;

/// Analyze a failed run: pick the last failing stage log, ask the model for a
/// structured diagnosis, and verify its cited evidence against the log text.
pub fn diagnose_flow(
    run_root: &Path,
    profile: &ModelProfile,
    backend: &dyn ChatBackend,
) -> Result<FlowDiagnosis, SkillError> {
    let mut failing: Vec<(PathBuf, String)> = WalkDir::new(run_root)
        .sort_by_file_name()
        .into_iter()
        .flatten()
        .filter(|e| {
            e.file_type().is_file() && e.path().extension().is_some_and(|ext| ext == "log")
        })
        .filter_map(|e| {
            let content = std::fs::read_to_string(e.path()).ok()?;
            content
                .contains("ERROR")
                .then(|| (e.into_path(), content))
        })
        .collect();
    let (log_path, log_content) = failing
        .pop()
        .ok_or_else(|| SkillError::NoFailureFound(run_root.to_path_buf()))?;
    let failing_stage = log_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".into());

    let tail_start = log_content.len().saturating_sub(DIAGNOSIS_LOG_TAIL_BYTES);
    let tail_start = (tail_start..=log_content.len())
        .find(|&i| log_content.is_char_boundary(i))
        .unwrap_or(0);
    let prompt = format!(
        "A hardening flow failed at stage `{failing_stage}`. Analyze the log tail below.\n\
         Reply using only these line prefixes (CAUSE lines ranked, most likely first;\n\
         EVIDENCE lines must quote the log verbatim):\n\
         CAUSE: <suspected cause>\nEVIDENCE: <verbatim log excerpt>\nFIX: <suggested fix>\n\n\
         Log tail:\n{}",
        &log_content[tail_start..]
    );
    let exchange = chat(
        profile,
        backend,
        &[ChatMessage::user(prompt)],
        &DecodeParams::default(),
    )?;

    let mut diagnosis = FlowDiagnosis {
        failing_stage,
        suspected_causes: Vec::new(),
        evidence: Vec::new(),
        suggested_fixes: Vec::new(),
        dropped_evidence: 0,
    };
    for line in exchange.response.lines() {
        let line = line.trim();
        if let Some(cause) = line.strip_prefix("CAUSE:") {
            diagnosis.suspected_causes.push(cause.trim().to_string());
        } else if let Some(excerpt) = line.strip_prefix("EVIDENCE:") {
            let excerpt = excerpt.trim();
            if log_content.contains(excerpt) {
                diagnosis.evidence.push(excerpt.to_string());
            } else {
                diagnosis.dropped_evidence += 1;
            }
        } else if let Some(fix) = line.strip_prefix("FIX:") {
            diagnosis.suggested_fixes.push(fix.trim().to_string());
        }
    }
    Ok(diagnosis)
}
