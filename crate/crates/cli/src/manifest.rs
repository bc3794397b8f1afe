//! The suite run manifest: which (task, model) pairs already completed, so
//! an interrupted suite resumes without re-running finished work.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// `completed`, `budget_exhausted`, `error`, or `incomplete_grading`.
    pub status: String,
    pub workspace: PathBuf,
    pub trajectory: PathBuf,
    #[serde(default)]
    pub score: Option<PathBuf>,
}

impl ManifestEntry {
    /// Completed pairs are never re-run on resume.
    pub fn is_done(&self) -> bool {
        self.status == "completed" || self.status == "budget_exhausted"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Keyed `model/task_id`.
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl RunManifest {
    pub fn key(model: &str, task_id: &str) -> String {
        format!("{model}/{task_id}")
    }

    pub fn load(out_dir: &Path) -> Result<Option<RunManifest>> {
        let path = out_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(serde_json::from_str(&text).with_context(|| {
            format!("parsing {}", path.display())
        })?))
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
