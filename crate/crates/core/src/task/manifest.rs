//! Task manifest loading and saving.
//!
//! A task directory holds a `task.toml` manifest plus an optional `seed/`
//! tree. Seed files are loaded as bytes and copied verbatim into the run
//! workspace at provisioning time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    ArtifactRule, Checkpoint, Difficulty, Milestone, MilestoneKind, RunLimits, ScriptCheck,
    TaskError, TaskSpec,
};

pub const MANIFEST_NAME: &str = "task.toml";
pub const SEED_DIR: &str = "seed";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    id: String,
    title: String,
    difficulty: Difficulty,
    prompt: String,
    #[serde(default)]
    limits: Option<RunLimits>,
    #[serde(default, rename = "milestone")]
    milestones: Vec<MilestoneDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MilestoneDoc {
    id: String,
    name: String,
    weight: u32,
    kind: MilestoneKind,
    #[serde(default, rename = "checkpoint", skip_serializing_if = "Vec::is_empty")]
    checkpoints: Vec<Checkpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    script: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expect_exit: Option<i32>,
    /// True when the script is shipped in `seed/` and must exist at load.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    script_seeded: bool,
    #[serde(default, rename = "artifact_rule", skip_serializing_if = "Vec::is_empty")]
    artifact_rules: Vec<ArtifactRule>,
}

/// Load and validate one task directory.
pub fn load_task(dir: &Path) -> Result<TaskSpec, TaskError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    if !manifest_path.is_file() {
        return Err(TaskError::MissingManifest(manifest_path));
    }
    let task_name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = fs::read_to_string(&manifest_path).map_err(|source| TaskError::Io {
        task: task_name.clone(),
        source,
    })?;
    let doc: ManifestDoc = toml::from_str(&text).map_err(|e| TaskError::Parse {
        task: task_name.clone(),
        reason: e.to_string(),
    })?;

    let workspace_seed = load_seed(&dir.join(SEED_DIR), &doc.id)?;

    let mut milestones = Vec::with_capacity(doc.milestones.len());
    for m in doc.milestones {
        let script = m.script.map(|path| ScriptCheck {
            path,
            expect_exit: m.expect_exit.unwrap_or(0),
        });
        if m.script_seeded {
            let script_path = script.as_ref().map(|s| s.path.clone()).unwrap_or_default();
            if !workspace_seed.iter().any(|(p, _)| *p == script_path) {
                return Err(TaskError::DanglingScript {
                    task: doc.id.clone(),
                    milestone: m.id.clone(),
                    script: script_path,
                });
            }
        }
        milestones.push(Milestone {
            id: m.id,
            name: m.name,
            weight: m.weight,
            kind: m.kind,
            checkpoints: m.checkpoints,
            script,
            artifact_rules: m.artifact_rules,
        });
    }

    let spec = TaskSpec {
        id: doc.id,
        title: doc.title,
        prompt: doc.prompt,
        difficulty: doc.difficulty,
        milestones,
        workspace_seed,
        limits: doc.limits.unwrap_or_default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn load_seed(seed_dir: &Path, task: &str) -> Result<Vec<(String, Vec<u8>)>, TaskError> {
    let mut seed = Vec::new();
    if !seed_dir.is_dir() {
        return Ok(seed);
    }
    for entry in walkdir::WalkDir::new(seed_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| TaskError::Io {
            task: task.to_string(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(seed_dir)
            .expect("walkdir stays under root")
            .to_string_lossy()
            .replace('\\', "/");
        let bytes = fs::read(entry.path()).map_err(|source| TaskError::Io {
            task: task.to_string(),
            source,
        })?;
        seed.push((rel, bytes));
    }
    seed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(seed)
}

/// Load every task subdirectory of a suite, sorted by task id.
pub fn load_suite(dir: &Path) -> Result<Vec<TaskSpec>, TaskError> {
    let mut tasks: BTreeMap<String, TaskSpec> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| TaskError::Io {
            task: dir.display().to_string(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for path in entries {
        let task = load_task(&path)?;
        if tasks.contains_key(&task.id) {
            return Err(TaskError::DuplicateTaskId(task.id));
        }
        tasks.insert(task.id.clone(), task);
    }
    Ok(tasks.into_values().collect())
}

/// Write a task back out as `task.toml` plus `seed/` files.
///
/// `load_task(save_task(spec))` yields a structurally equal spec.
pub fn save_task(spec: &TaskSpec, dir: &Path) -> Result<(), TaskError> {
    let io_err = |source| TaskError::Io {
        task: spec.id.clone(),
        source,
    };
    spec.validate()?;
    fs::create_dir_all(dir).map_err(io_err)?;
    let doc = ManifestDoc {
        id: spec.id.clone(),
        title: spec.title.clone(),
        difficulty: spec.difficulty,
        prompt: spec.prompt.clone(),
        limits: Some(spec.limits.clone()),
        milestones: spec
            .milestones
            .iter()
            .map(|m| MilestoneDoc {
                id: m.id.clone(),
                name: m.name.clone(),
                weight: m.weight,
                kind: m.kind,
                checkpoints: m.checkpoints.clone(),
                script: m.script.as_ref().map(|s| s.path.clone()),
                expect_exit: m.script.as_ref().map(|s| s.expect_exit),
                script_seeded: false,
                artifact_rules: m.artifact_rules.clone(),
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&doc).map_err(|e| TaskError::Parse {
        task: spec.id.clone(),
        reason: e.to_string(),
    })?;
    fs::write(dir.join(MANIFEST_NAME), text).map_err(io_err)?;
    for (rel, bytes) in &spec.workspace_seed {
        let path = dir.join(SEED_DIR).join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(path, bytes).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write_manifest(dir: &Path, weights: &[u32]) {
        let mut doc = String::from(
            r#"
id = "pipelined_multiplier"
title = "Pipelined multiplier"
difficulty = "medium"
prompt = "Design a 4-bit pipelined multiplier."
"#,
        );
        let kinds = ["judge", "judge", "script", "artifact"];
        for (i, (&w, kind)) in weights.iter().zip(kinds).enumerate() {
            doc.push_str(&format!(
                "\n[[milestone]]\nid = \"m{i}\"\nname = \"M{i}\"\nweight = {w}\nkind = \"{kind}\"\n"
            ));
            match kind {
                "judge" => doc.push_str(
                    "[[milestone.checkpoint]]\nid = \"c0\"\ntext = \"Does it work?\"\npoints = 1\n",
                ),
                "script" => doc.push_str("script = \"run_test.sh\"\nexpect_exit = 0\n"),
                "artifact" => doc.push_str(
                    "[[milestone.artifact_rule]]\nkind = \"file_exists_glob\"\npattern = \"config.json\"\ndescription = \"config present\"\n",
                ),
                _ => unreachable!(),
            }
        }
        fs::write(dir.join(MANIFEST_NAME), doc).unwrap();
    }

    #[test]
    fn loads_valid_task_with_appendix_weights() {
        let tmp = TempDir::new().unwrap();
        write_manifest(tmp.path(), &[15, 15, 20, 50]);
        let task = load_task(tmp.path()).unwrap();
        assert_eq!(task.milestones.len(), 4);
        assert_eq!(task.milestones.iter().map(|m| m.weight).sum::<u32>(), 100);
    }

    #[test]
    fn rejects_bad_weight_sum() {
        let tmp = TempDir::new().unwrap();
        write_manifest(tmp.path(), &[15, 15, 20, 40]);
        assert!(matches!(
            load_task(tmp.path()),
            Err(TaskError::WeightSum { sum: 90, .. })
        ));
    }

    #[test]
    fn rejects_judge_milestone_without_checkpoints() {
        let tmp = TempDir::new().unwrap();
        fs::write(
            tmp.path().join(MANIFEST_NAME),
            r#"
id = "t"
title = "t"
difficulty = "easy"
prompt = "p"

[[milestone]]
id = "m"
name = "m"
weight = 100
kind = "judge"
"#,
        )
        .unwrap();
        assert!(matches!(
            load_task(tmp.path()),
            Err(TaskError::InvalidCheckpoint { .. })
        ));
    }

    #[test]
    fn missing_manifest() {
        let tmp = TempDir::new().unwrap();
        assert!(matches!(
            load_task(tmp.path()),
            Err(TaskError::MissingManifest(_))
        ));
    }

    #[test]
    fn seeded_script_must_exist() {
        let tmp = TempDir::new().unwrap();
        fs::write(
            tmp.path().join(MANIFEST_NAME),
            r#"
id = "t"
title = "t"
difficulty = "easy"
prompt = "p"

[[milestone]]
id = "m"
name = "m"
weight = 100
kind = "script"
script = "check.sh"
script_seeded = true
"#,
        )
        .unwrap();
        assert!(matches!(
            load_task(tmp.path()),
            Err(TaskError::DanglingScript { .. })
        ));
        fs::create_dir(tmp.path().join(SEED_DIR)).unwrap();
        fs::write(tmp.path().join(SEED_DIR).join("check.sh"), "exit 0\n").unwrap();
        assert!(load_task(tmp.path()).is_ok());
    }

    #[test]
    fn suite_sorted_and_duplicates_rejected() {
        let tmp = TempDir::new().unwrap();
        assert!(load_suite(tmp.path()).unwrap().is_empty());
        for name in ["b_dir", "a_dir", "c_dir"] {
            let d = tmp.path().join(name);
            fs::create_dir(&d).unwrap();
            write_manifest(&d, &[15, 15, 20, 50]);
        }
        // all three share the same id
        assert!(matches!(
            load_suite(tmp.path()),
            Err(TaskError::DuplicateTaskId(_))
        ));
    }

    #[test]
    fn load_is_deterministic_and_round_trips() {
        let tmp = TempDir::new().unwrap();
        write_manifest(tmp.path(), &[15, 15, 20, 50]);
        fs::create_dir(tmp.path().join(SEED_DIR)).unwrap();
        fs::write(tmp.path().join(SEED_DIR).join("top.v"), "module top; endmodule\n").unwrap();
        let a = load_task(tmp.path()).unwrap();
        let b = load_task(tmp.path()).unwrap();
        assert_eq!(a, b);

        let out = TempDir::new().unwrap();
        save_task(&a, out.path()).unwrap();
        let reloaded = load_task(out.path()).unwrap();
        assert_eq!(reloaded, a);
    }
}
