//! Deterministic workspace-to-text serialization for the judge.
//!
//! Source files are collected first, in lexicographic path order, under a
//! byte budget; build trees are excluded except for metrics reports and final
//! GDS files, which are re-included so physical results stay visible. Binary
//! files appear in the manifest but their bytes are never inlined.

use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};

use super::{EvalError, JudgeConfig};

/// One file the judge can see, whether or not its content was inlined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Workspace-relative path with `/` separators.
    pub path: String,
    pub size: u64,
    pub binary: bool,
}

/// A text file whose content made it into the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncludedFile {
    pub path: String,
    pub content: String,
    pub truncated: bool,
}

/// Everything serialized for one judged task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub manifest: Vec<FileEntry>,
    pub files: Vec<IncludedFile>,
}

impl EvidenceBundle {
    /// The single text document handed to the judge.
    pub fn render(&self) -> String {
        let mut out = String::from("Workspace file manifest:\n");
        for entry in &self.manifest {
            out.push_str(&format!(
                "  {} ({} bytes{})\n",
                entry.path,
                entry.size,
                if entry.binary {
                    ", binary — content omitted"
                } else {
                    ""
                }
            ));
        }
        for file in &self.files {
            out.push_str(&format!("\n===== {} =====\n", file.path));
            out.push_str(&file.content);
            if !file.content.ends_with('\n') {
                out.push('\n');
            }
            if file.truncated {
                out.push_str("[... file truncated to fit the evidence budget ...]\n");
            }
        }
        out
    }
}

fn build_globset(patterns: &[String]) -> Result<GlobSet, EvalError> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        builder.add(Glob::new(p).map_err(|e| {
            EvalError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("bad glob `{p}`: {e}"),
            ))
        })?);
    }
    builder.build().map_err(|e| {
        EvalError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            e.to_string(),
        ))
    })
}

/// Files re-included from under excluded build trees: flow metric reports
/// and final GDS layouts.
fn is_build_exception(rel: &str) -> bool {
    rel.ends_with("/metrics.csv") || rel == "metrics.csv" || rel.ends_with(".gds")
}

fn is_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(8192).any(|&b| b == 0)
}

/// Collect the judge's evidence from a finished workspace.
///
/// Deterministic: same workspace bytes, same bundle. Read-only: the
/// workspace is never modified.
pub fn collect_evidence(
    workspace: &Path,
    config: &JudgeConfig,
) -> Result<EvidenceBundle, EvalError> {
    if !workspace.is_dir() {
        return Err(EvalError::WorkspaceMissing(workspace.to_path_buf()));
    }
    let include = build_globset(&config.include_globs)?;
    let exclude = build_globset(&config.exclude_globs)?;

    let mut primary: Vec<String> = Vec::new();
    let mut exceptions: Vec<String> = Vec::new();
    for entry in walkdir::WalkDir::new(workspace).sort_by_file_name() {
        let entry = entry.map_err(|e| EvalError::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(workspace)
            .expect("walkdir stays under root")
            .to_string_lossy()
            .replace('\\', "/");
        if !include.is_match(&rel) {
            continue;
        }
        if exclude.is_match(&rel) {
            if is_build_exception(&rel) {
                exceptions.push(rel);
            }
        } else {
            primary.push(rel);
        }
    }

    let mut manifest = Vec::new();
    let mut files = Vec::new();
    let mut budget = config.max_workspace_bytes;
    // sources first, then build-tree exceptions, so truncation under a tight
    // budget drops derived artifacts before source code
    for rel in primary.into_iter().chain(exceptions) {
        let bytes = std::fs::read(workspace.join(&rel))?;
        let binary = is_binary(&bytes);
        manifest.push(FileEntry {
            path: rel.clone(),
            size: bytes.len() as u64,
            binary,
        });
        if binary || budget == 0 {
            continue;
        }
        let text = String::from_utf8_lossy(&bytes);
        let (content, truncated) = if text.len() <= budget {
            (text.into_owned(), false)
        } else {
            let mut cut = budget;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            (text[..cut].to_string(), true)
        };
        budget -= content.len();
        files.push(IncludedFile {
            path: rel,
            content,
            truncated,
        });
    }
    Ok(EvidenceBundle { manifest, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ModelProfile;
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

    fn seed_workspace(tmp: &TempDir) {
        fs::write(tmp.path().join("top.v"), "module top; endmodule\n").unwrap();
        fs::create_dir_all(tmp.path().join("sim_build")).unwrap();
        fs::write(tmp.path().join("sim_build/sim.vvp"), b"\x00\x01junk").unwrap();
        fs::create_dir_all(tmp.path().join("runs/RUN_001/reports")).unwrap();
        fs::write(
            tmp.path().join("runs/RUN_001/reports/metrics.csv"),
            "Metric,Value\ndesign__die__area,10000\n",
        )
        .unwrap();
        fs::write(tmp.path().join("runs/RUN_001/huge.log"), "x".repeat(1000)).unwrap();
        fs::create_dir_all(tmp.path().join("runs/RUN_001/results/final/gds")).unwrap();
        fs::write(
            tmp.path().join("runs/RUN_001/results/final/gds/top.gds"),
            b"\x00GDSII",
        )
        .unwrap();
    }

    #[test]
    fn build_trees_excluded_except_metrics_and_gds() {
        let tmp = TempDir::new().unwrap();
        seed_workspace(&tmp);
        let bundle = collect_evidence(tmp.path(), &config()).unwrap();
        let paths: Vec<&str> = bundle.manifest.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"top.v"));
        assert!(paths.contains(&"runs/RUN_001/reports/metrics.csv"));
        assert!(paths.contains(&"runs/RUN_001/results/final/gds/top.gds"));
        assert!(!paths.iter().any(|p| p.contains("sim_build")));
        assert!(!paths.contains(&"runs/RUN_001/huge.log"));
        // the GDS is binary: listed, never inlined
        let gds = bundle
            .manifest
            .iter()
            .find(|e| e.path.ends_with(".gds"))
            .unwrap();
        assert!(gds.binary);
        assert!(!bundle.files.iter().any(|f| f.path.ends_with(".gds")));
    }

    #[test]
    fn budget_truncates_build_exceptions_before_sources() {
        let tmp = TempDir::new().unwrap();
        seed_workspace(&tmp);
        let mut cfg = config();
        cfg.max_workspace_bytes = 30; // enough for top.v only
        let bundle = collect_evidence(tmp.path(), &cfg).unwrap();
        let top = bundle.files.iter().find(|f| f.path == "top.v").unwrap();
        assert!(!top.truncated);
        let metrics = bundle
            .files
            .iter()
            .find(|f| f.path.ends_with("metrics.csv"));
        assert!(metrics.map_or(true, |f| f.truncated));
    }

    #[test]
    fn deterministic_and_read_only() {
        let tmp = TempDir::new().unwrap();
        seed_workspace(&tmp);
        let a = collect_evidence(tmp.path(), &config()).unwrap();
        let b = collect_evidence(tmp.path(), &config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.render(), b.render());
        assert!(a.render().contains("===== top.v ====="));
    }

    #[test]
    fn missing_workspace_is_an_error() {
        assert!(matches!(
            collect_evidence(Path::new("/nonexistent/ws"), &config()),
            Err(EvalError::WorkspaceMissing(_))
        ));
    }
}
