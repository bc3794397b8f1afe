//! The three milestone graders: LLM judge, verification script, and
//! artifact rules.

use std::path::Path;

use regex::Regex;

use super::{EvalError, EvidenceBundle, JudgeConfig};
use crate::gateway::{chat, ChatBackend, ChatMessage, DecodeParams};
use crate::sandbox::Sandbox;
use crate::scoring::{CheckpointVerdict, MilestoneResult, VerdictSource};
use crate::task::{ArtifactRuleKind, Milestone};

/// Rationale recorded when the judge never produced a parseable verdict for
/// a checkpoint. Conservative: unparseable is a fail, never a pass.
pub const UNPARSEABLE_RATIONALE: &str = "unparseable judge output";

fn judge_system_prompt() -> &'static str {
    "You are a strict grader for hardware-design benchmark tasks. You will be \
     shown the files of a finished workspace and a list of binary checkpoints. \
     Answer every checkpoint with exactly one line in the form:\n\
     <checkpoint_id>: YES|NO — <one-sentence rationale grounded in the files>\n\
     Output one line per checkpoint, nothing else. When the evidence is \
     ambiguous or missing, answer NO."
}

fn judge_user_prompt(milestone: &Milestone, evidence: &EvidenceBundle) -> String {
    let mut out = format!(
        "Milestone: {} ({})\n\nCheckpoints to grade:\n",
        milestone.name, milestone.id
    );
    for cp in &milestone.checkpoints {
        out.push_str(&format!("- {}: {}\n", cp.id, cp.text));
    }
    out.push_str("\n");
    out.push_str(&evidence.render());
    out.push_str("\nGrade every checkpoint now, one line each.");
    out
}

/// Parse `<id>: YES|NO — <rationale>` lines, keeping only known checkpoint
/// ids. Both em-dash and hyphen separators are accepted; later lines for the
/// same id win.
fn parse_judge_reply(milestone: &Milestone, reply: &str) -> Vec<(String, bool, String)> {
    let line_re = Regex::new(r"(?m)^\s*-?\s*([A-Za-z0-9_.-]+)\s*:\s*(YES|NO)\b\s*[—–-]*\s*(.*)$")
        .expect("judge line regex");
    let mut parsed: Vec<(String, bool, String)> = Vec::new();
    for c in line_re.captures_iter(reply) {
        let id = c[1].to_string();
        if !milestone.checkpoints.iter().any(|cp| cp.id == id) {
            continue;
        }
        let verdict = (&c[2] == "YES", c[3].trim().to_string());
        if let Some(slot) = parsed.iter_mut().find(|(i, _, _)| *i == id) {
            (slot.1, slot.2) = verdict;
        } else {
            parsed.push((id, verdict.0, verdict.1));
        }
    }
    parsed
}

/// Grade one judge milestone with a single model call covering all of its
/// checkpoints. A reply that leaves checkpoints unresolved triggers one
/// corrective retry; checkpoints still unresolved after that fail with
/// [`UNPARSEABLE_RATIONALE`]. Returns the result plus retries spent.
///
/// Provider errors propagate — the caller records the milestone as ungraded
/// rather than inventing a zero.
pub fn judge_milestone(
    milestone: &Milestone,
    evidence: &EvidenceBundle,
    backend: &dyn ChatBackend,
    config: &JudgeConfig,
) -> Result<(MilestoneResult, u32), EvalError> {
    let params = DecodeParams {
        temperature: 0.0,
        ..DecodeParams::default()
    };
    let mut messages = vec![
        ChatMessage::system(judge_system_prompt()),
        ChatMessage::user(judge_user_prompt(milestone, evidence)),
    ];
    let mut resolved: Vec<(String, bool, String)> = Vec::new();
    let mut retries = 0u32;
    loop {
        let exchange = chat(&config.profile, backend, &messages, &params)?;
        for (id, passed, rationale) in parse_judge_reply(milestone, &exchange.response) {
            if let Some(slot) = resolved.iter_mut().find(|(i, _, _)| *i == id) {
                (slot.1, slot.2) = (passed, rationale);
            } else {
                resolved.push((id, passed, rationale));
            }
        }
        let missing: Vec<&str> = milestone
            .checkpoints
            .iter()
            .filter(|cp| !resolved.iter().any(|(id, _, _)| *id == cp.id))
            .map(|cp| cp.id.as_str())
            .collect();
        if missing.is_empty() || retries >= config.retries_on_parse_failure {
            break;
        }
        retries += 1;
        messages.push(ChatMessage::assistant(exchange.response));
        messages.push(ChatMessage::user(format!(
            "Your reply could not be parsed for: {}. Answer again using exactly \
             one line per checkpoint in the form `<checkpoint_id>: YES|NO — \
             <rationale>` and nothing else.",
            missing.join(", ")
        )));
    }

    let verdicts: Vec<CheckpointVerdict> = milestone
        .checkpoints
        .iter()
        .map(|cp| {
            match resolved.iter().find(|(id, _, _)| *id == cp.id) {
                Some((_, passed, rationale)) => CheckpointVerdict {
                    checkpoint_id: cp.id.clone(),
                    passed: *passed,
                    rationale: rationale.clone(),
                    source: VerdictSource::Judge,
                },
                None => CheckpointVerdict {
                    checkpoint_id: cp.id.clone(),
                    passed: false,
                    rationale: UNPARSEABLE_RATIONALE.to_string(),
                    source: VerdictSource::Judge,
                },
            }
        })
        .collect();
    let result = crate::scoring::score_milestone(milestone, &verdicts)
        .expect("verdicts constructed one-per-checkpoint");
    Ok((result, retries))
}

fn tail(s: &str, max: usize) -> &str {
    let mut start = s.len().saturating_sub(max);
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

/// Run a script milestone: the whole milestone is one binary verdict, earned
/// iff the script's exit code equals the expected one. Infrastructure
/// problems (missing script, sandbox failure, timeout) fail the verdict with
/// an explanatory rationale — scripts are objective, so a zero is meaningful.
pub fn run_script_milestone(
    milestone: &Milestone,
    workspace: &Path,
    config: &JudgeConfig,
) -> MilestoneResult {
    let script = milestone
        .script
        .as_ref()
        .expect("script milestone validated at load");
    let (passed, rationale) = if !workspace.join(&script.path).is_file() {
        (false, format!("script `{}` not found in workspace", script.path))
    } else {
        match Sandbox::direct(workspace)
            .and_then(|sb| sb.run(&format!("./{}", script.path), config.script_timeout))
        {
            Ok(outcome) => {
                let passed = !outcome.timed_out && outcome.exit_code == script.expect_exit;
                let mut rationale = format!(
                    "exit code {} (expected {}){}",
                    outcome.exit_code,
                    script.expect_exit,
                    if outcome.timed_out { ", timed out" } else { "" }
                );
                if !outcome.stdout.is_empty() {
                    rationale.push_str(&format!("\nstdout: {}", tail(&outcome.stdout, 500)));
                }
                if !outcome.stderr.is_empty() {
                    rationale.push_str(&format!("\nstderr: {}", tail(&outcome.stderr, 500)));
                }
                (passed, rationale)
            }
            Err(e) => (false, format!("script execution failed: {e}")),
        }
    };
    MilestoneResult {
        milestone_id: milestone.id.clone(),
        earned_points: passed as u32,
        total_points: 1,
        verdicts: vec![CheckpointVerdict {
            checkpoint_id: milestone.id.clone(),
            passed,
            rationale,
            source: VerdictSource::Script,
        }],
    }
}

/// Check an artifact milestone: one point per rule.
///
/// `file_exists_glob` passes iff at least one workspace file matches the
/// glob; `file_contains_regex` passes iff some text file matches the regex.
/// Read-only and deterministic.
pub fn check_artifact_milestone(milestone: &Milestone, workspace: &Path) -> MilestoneResult {
    let mut rel_paths: Vec<String> = walkdir::WalkDir::new(workspace)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            e.path()
                .strip_prefix(workspace)
                .expect("walkdir stays under root")
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect();
    rel_paths.sort();

    let mut verdicts = Vec::with_capacity(milestone.artifact_rules.len());
    for (i, rule) in milestone.artifact_rules.iter().enumerate() {
        let (passed, rationale) = match rule.kind {
            ArtifactRuleKind::FileExistsGlob => {
                match globset::Glob::new(&rule.pattern).map(|g| g.compile_matcher()) {
                    Ok(matcher) => match rel_paths.iter().find(|p| matcher.is_match(p)) {
                        Some(hit) => (true, format!("`{hit}` matches `{}`", rule.pattern)),
                        None => (false, format!("no file matches `{}`", rule.pattern)),
                    },
                    Err(e) => (false, format!("glob `{}` is invalid: {e}", rule.pattern)),
                }
            }
            ArtifactRuleKind::FileContainsRegex => match Regex::new(&rule.pattern) {
                Ok(re) => {
                    let hit = rel_paths.iter().find(|p| {
                        std::fs::read(workspace.join(p.as_str()))
                            .ok()
                            .filter(|bytes| !bytes.iter().take(8192).any(|&b| b == 0))
                            .map(|bytes| re.is_match(&String::from_utf8_lossy(&bytes)))
                            .unwrap_or(false)
                    });
                    match hit {
                        Some(p) => (true, format!("`{p}` contains `{}`", rule.pattern)),
                        None => (false, format!("no file contains `{}`", rule.pattern)),
                    }
                }
                Err(e) => (false, format!("regex `{}` is invalid: {e}", rule.pattern)),
            },
        };
        verdicts.push(CheckpointVerdict {
            checkpoint_id: format!("{}_rule{}", milestone.id, i + 1),
            passed,
            rationale: format!("{}: {rationale}", rule.description),
            source: VerdictSource::Artifact,
        });
    }
    MilestoneResult {
        milestone_id: milestone.id.clone(),
        earned_points: verdicts.iter().filter(|v| v.passed).count() as u32,
        total_points: verdicts.len() as u32,
        verdicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ModelProfile, ReplayBackend, ReplayEntry};
    use crate::task::{ArtifactRule, Checkpoint, MilestoneKind, ScriptCheck};
    use std::fs;
    use tempfile::TempDir;

    fn config() -> JudgeConfig {
        JudgeConfig::new(ModelProfile {
            model_id: "judge".into(),
            input_cost_per_1k_tokens: 0.into(),
            output_cost_per_1k_tokens: 0.into(),
            max_context_tokens: 1_000_000,
        })
    }

    fn judge_milestone_fixture() -> Milestone {
        Milestone {
            id: "m".into(),
            name: "M".into(),
            weight: 100,
            kind: MilestoneKind::Judge,
            checkpoints: vec![
                Checkpoint {
                    id: "a".into(),
                    text: "Does A hold?".into(),
                    points: 1,
                },
                Checkpoint {
                    id: "b".into(),
                    text: "Does B hold?".into(),
                    points: 1,
                },
            ],
            script: None,
            artifact_rules: vec![],
        }
    }

    fn empty_evidence() -> EvidenceBundle {
        EvidenceBundle {
            manifest: vec![],
            files: vec![],
        }
    }

    #[test]
    fn hyphen_and_em_dash_separators_both_parse() {
        let m = judge_milestone_fixture();
        let backend = ReplayBackend::new(vec![ReplayEntry::text(
            "a: YES — holds as required\nb: NO - the file is missing",
        )]);
        let (result, retries) =
            judge_milestone(&m, &empty_evidence(), &backend, &config()).unwrap();
        assert_eq!(retries, 0);
        assert_eq!(result.earned_points, 1);
        assert_eq!(result.verdicts[0].rationale, "holds as required");
        assert_eq!(result.verdicts[1].rationale, "the file is missing");
    }

    #[test]
    fn partial_reply_retries_then_fails_conservatively() {
        let m = judge_milestone_fixture();
        // both replies only ever answer `a`
        let backend = ReplayBackend::new(vec![
            ReplayEntry::text("a: YES — fine"),
            ReplayEntry::text("a: YES — still fine"),
        ]);
        let (result, retries) =
            judge_milestone(&m, &empty_evidence(), &backend, &config()).unwrap();
        assert_eq!(retries, 1);
        assert!(result.verdicts[0].passed);
        assert!(!result.verdicts[1].passed);
        assert_eq!(result.verdicts[1].rationale, UNPARSEABLE_RATIONALE);
    }

    #[test]
    fn one_call_per_milestone_and_prompt_contains_checkpoints() {
        let m = judge_milestone_fixture();
        let backend = ReplayBackend::new(vec![ReplayEntry::text("a: YES — ok\nb: YES — ok")]);
        judge_milestone(&m, &empty_evidence(), &backend, &config()).unwrap();
        let requests = backend.recorded_requests();
        assert_eq!(requests.len(), 1);
        let user = &requests[0].last().unwrap().content;
        assert!(user.contains("a: Does A hold?"));
        assert!(user.contains("b: Does B hold?"));
    }

    fn script_milestone(path: &str, expect_exit: i32) -> Milestone {
        Milestone {
            id: "run".into(),
            name: "Run".into(),
            weight: 100,
            kind: MilestoneKind::Script,
            checkpoints: vec![],
            script: Some(ScriptCheck {
                path: path.into(),
                expect_exit,
            }),
            artifact_rules: vec![],
        }
    }

    fn write_script(dir: &Path, name: &str, body: &str) {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
        }
    }

    #[test]
    fn script_fraction_is_zero_or_one() {
        let tmp = TempDir::new().unwrap();
        write_script(tmp.path(), "pass.sh", "#!/bin/sh\necho ok\nexit 0\n");
        write_script(tmp.path(), "fail.sh", "#!/bin/sh\necho broken >&2\nexit 3\n");
        let cfg = config();

        let pass = run_script_milestone(&script_milestone("pass.sh", 0), tmp.path(), &cfg);
        assert_eq!((pass.earned_points, pass.total_points), (1, 1));
        assert!(pass.verdicts[0].rationale.contains("stdout: ok"));

        let fail = run_script_milestone(&script_milestone("fail.sh", 0), tmp.path(), &cfg);
        assert_eq!((fail.earned_points, fail.total_points), (0, 1));
        assert!(fail.verdicts[0].rationale.contains("exit code 3"));
        assert!(fail.verdicts[0].rationale.contains("stderr: broken"));

        // nonzero expected exit codes are honored
        let expect3 = run_script_milestone(&script_milestone("fail.sh", 3), tmp.path(), &cfg);
        assert_eq!(expect3.earned_points, 1);

        let missing = run_script_milestone(&script_milestone("gone.sh", 0), tmp.path(), &cfg);
        assert_eq!(missing.earned_points, 0);
        assert!(missing.verdicts[0].rationale.contains("not found"));
    }

    #[test]
    fn artifact_rules_score_one_point_each() {
        let tmp = TempDir::new().unwrap();
        fs::write(tmp.path().join("config.json"), "{\"DESIGN_NAME\": \"top\"}").unwrap();
        fs::create_dir_all(tmp.path().join("runs/RUN_001/results/final/gds")).unwrap();
        fs::write(
            tmp.path().join("runs/RUN_001/results/final/gds/top.gds"),
            b"\x00GDS",
        )
        .unwrap();
        let m = Milestone {
            id: "flow".into(),
            name: "Flow".into(),
            weight: 100,
            kind: MilestoneKind::Artifact,
            checkpoints: vec![],
            script: None,
            artifact_rules: vec![
                ArtifactRule {
                    kind: ArtifactRuleKind::FileExistsGlob,
                    pattern: "config.json".into(),
                    description: "flow config present".into(),
                },
                ArtifactRule {
                    kind: ArtifactRuleKind::FileExistsGlob,
                    pattern: "runs/**/*.gds".into(),
                    description: "final GDS produced".into(),
                },
                ArtifactRule {
                    kind: ArtifactRuleKind::FileContainsRegex,
                    pattern: r#""DESIGN_NAME""#.into(),
                    description: "design name configured".into(),
                },
                ArtifactRule {
                    kind: ArtifactRuleKind::FileExistsGlob,
                    pattern: "*.lef".into(),
                    description: "LEF view present".into(),
                },
            ],
        };
        let result = check_artifact_milestone(&m, tmp.path());
        assert_eq!((result.earned_points, result.total_points), (3, 4));
        assert!(result.verdicts[3].rationale.contains("no file matches"));
        assert!(result
            .verdicts
            .iter()
            .all(|v| v.source == VerdictSource::Artifact));
    }
}
