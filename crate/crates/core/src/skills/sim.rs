//! Simulation skill: runs the task's test harness and parses cocotb-style
//! regression output.

use std::path::Path;
use std::time::Duration;

use regex::Regex;

use super::{SkillError, ToolDriver};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub tests_total: u64,
    pub tests_passed: u64,
    pub tests_failed: u64,
    pub tests_skipped: u64,
    pub failed_assertions: Vec<String>,
    /// Whether a `** TESTS=… **` summary line was found at all.
    pub summary_present: bool,
    pub success: bool,
    pub raw_excerpt: String,
}

/// Parse a simulation log. Total over arbitrary bytes: a log without the
/// cocotb summary line degrades to zero totals with `summary_present=false`
/// (and therefore `success=false`).
pub fn parse_sim_log(raw: &str) -> SimResult {
    let summary =
        Regex::new(r"\*\* TESTS=(\d+) PASS=(\d+) FAIL=(\d+) SKIP=(\d+) \*\*").expect("summary re");
    let assertion = Regex::new(r"(?:AssertionError|cocotb\.result\.TestFailure):\s*(.+)")
        .expect("assertion re");

    // the last summary wins: reruns within one log supersede earlier ones
    let counts = summary
        .captures_iter(raw)
        .last()
        .map(|c| {
            let n = |i: usize| c[i].parse::<u64>().unwrap_or(0);
            (n(1), n(2), n(3), n(4))
        });
    let (tests_total, tests_passed, tests_failed, tests_skipped) =
        counts.unwrap_or((0, 0, 0, 0));
    let failed_assertions: Vec<String> = assertion
        .captures_iter(raw)
        .map(|c| c[1].trim().to_string())
        .collect();
    SimResult {
        tests_total,
        tests_passed,
        tests_failed,
        tests_skipped,
        failed_assertions,
        summary_present: counts.is_some(),
        success: counts.is_some() && tests_failed == 0 && tests_total > 0,
        raw_excerpt: raw.to_string(),
    }
}

impl SimResult {
    /// passed + failed + skipped = total, when the summary reported all four.
    pub fn accounting_consistent(&self) -> bool {
        !self.summary_present
            || self.tests_passed + self.tests_failed + self.tests_skipped == self.tests_total
    }
}

/// Run the test harness in `workdir` (e.g. `./run_test.sh` or `make`) via the
/// configured driver and parse its output.
pub fn simulate_verilog(
    workdir: &Path,
    entry: &str,
    driver: &ToolDriver,
    timeout: Duration,
) -> Result<SimResult, SkillError> {
    if let ToolDriver::Real { .. } = driver {
        // a harness must exist before we try to execute it
        let entry_file = workdir.join(entry.trim_start_matches("./"));
        if !entry_file.is_file() && !workdir.join("Makefile").is_file() {
            return Err(SkillError::HarnessMissing(workdir.to_path_buf()));
        }
    }
    let outcome = driver.obtain(entry, workdir, timeout)?;
    let raw = format!("{}{}", outcome.stdout, outcome.stderr);
    Ok(parse_sim_log(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> String {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures/sim")
            .join(name);
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn failing_fixture_counts_and_assertion() {
        let result = parse_sim_log(&fixture("cocotb_fail.log"));
        assert_eq!(result.tests_total, 1);
        assert_eq!(result.tests_passed, 0);
        assert_eq!(result.tests_failed, 1);
        assert_eq!(result.tests_skipped, 0);
        assert!(!result.success);
        assert!(result.summary_present);
        assert_eq!(result.failed_assertions.len(), 1);
        assert!(result.failed_assertions[0].contains("Product incorrect"));
        assert!(result.accounting_consistent());
    }

    #[test]
    fn passing_fixture_is_success() {
        let result = parse_sim_log(&fixture("cocotb_pass.log"));
        assert!(result.success);
        assert_eq!(result.tests_passed, 1);
        assert!(result.failed_assertions.is_empty());
        assert!(result.accounting_consistent());
    }

    #[test]
    fn empty_log_degrades() {
        let result = parse_sim_log("");
        assert_eq!(result.tests_total, 0);
        assert!(!result.summary_present);
        assert!(!result.success);
        assert!(result.accounting_consistent());
    }

    #[test]
    fn last_summary_line_wins() {
        let log = "** TESTS=2 PASS=1 FAIL=1 SKIP=0 **\nrerun\n** TESTS=2 PASS=2 FAIL=0 SKIP=0 **";
        let result = parse_sim_log(log);
        assert_eq!(result.tests_passed, 2);
        assert!(result.success);
    }

    #[test]
    fn harness_missing_for_real_driver() {
        let tmp = tempfile::TempDir::new().unwrap();
        let driver = ToolDriver::Real {
            argv: vec!["sh".into(), "-c".into(), "./run_test.sh".into()],
        };
        assert!(matches!(
            simulate_verilog(tmp.path(), "./run_test.sh", &driver, Duration::from_secs(5)),
            Err(SkillError::HarnessMissing(_))
        ));
    }
}
