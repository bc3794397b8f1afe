//! AST-summary skill: delegates parsing to an external HDL parser process
//! and maps its JSON output onto a compact summary.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{SkillError, ToolDriver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortDirection {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: PortDirection,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSummary {
    pub name: String,
    pub ports: Vec<Port>,
    #[serde(default)]
    pub always_blocks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstSummary {
    pub modules: Vec<ModuleSummary>,
    /// (parent, child) module instantiation pairs.
    #[serde(default)]
    pub instantiations: Vec<(String, String)>,
}

/// Decode the external parser's JSON into a validated summary.
pub fn parse_ast_json(raw: &str) -> Result<AstSummary, SkillError> {
    let summary: AstSummary =
        serde_json::from_str(raw).map_err(|e| SkillError::ParserError(e.to_string()))?;
    for module in &summary.modules {
        for port in &module.ports {
            if port.width == 0 {
                return Err(SkillError::ParserError(format!(
                    "port {}.{} has zero width",
                    module.name, port.name
                )));
            }
        }
    }
    Ok(summary)
}

/// Run the external parser on a Verilog file via the configured driver.
pub fn parse_verilog(
    path: &Path,
    workdir: &Path,
    driver: &ToolDriver,
    timeout: Duration,
) -> Result<AstSummary, SkillError> {
    if !path.is_file() {
        return Err(SkillError::FileMissing(path.to_path_buf()));
    }
    let outcome = driver.obtain(&path.to_string_lossy(), workdir, timeout)?;
    if outcome.exit_code != 0 {
        return Err(SkillError::ParserError(format!(
            "parser exited {}: {}",
            outcome.exit_code,
            outcome.stderr.trim()
        )));
    }
    // a parser that emits nothing for an empty file normalizes to no modules
    if outcome.stdout.trim().is_empty() {
        return Ok(AstSummary {
            modules: Vec::new(),
            instantiations: Vec::new(),
        });
    }
    parse_ast_json(&outcome.stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures/ast/pipelined_multiplier.json")
    }

    #[test]
    fn multiplier_fixture_interface() {
        let tmp = tempfile::TempDir::new().unwrap();
        let v = tmp.path().join("pipelined_multiplier.v");
        std::fs::write(&v, "module pipelined_multiplier; endmodule\n").unwrap();
        let driver = ToolDriver::mock(fixture(), 0);
        let summary = parse_verilog(&v, tmp.path(), &driver, Duration::from_secs(5)).unwrap();
        assert_eq!(summary.modules.len(), 1);
        let module = &summary.modules[0];
        assert_eq!(module.name, "pipelined_multiplier");
        let port = |name: &str| module.ports.iter().find(|p| p.name == name).unwrap();
        assert_eq!(port("a").width, 4);
        assert_eq!(port("b").width, 4);
        assert_eq!(port("product").width, 8);
        assert_eq!(port("product").direction, PortDirection::Output);
        assert_eq!(port("clk").direction, PortDirection::Input);
        assert_eq!(module.always_blocks, 3);
    }

    #[test]
    fn bad_direction_and_zero_width_rejected() {
        let bad_dir = r#"{"modules":[{"name":"m","ports":[{"name":"p","direction":"sideways","width":1}]}]}"#;
        assert!(matches!(
            parse_ast_json(bad_dir),
            Err(SkillError::ParserError(_))
        ));
        let zero_width =
            r#"{"modules":[{"name":"m","ports":[{"name":"p","direction":"input","width":0}]}]}"#;
        assert!(matches!(
            parse_ast_json(zero_width),
            Err(SkillError::ParserError(_))
        ));
    }

    #[test]
    fn empty_output_normalizes_to_zero_modules() {
        let tmp = tempfile::TempDir::new().unwrap();
        let v = tmp.path().join("empty.v");
        std::fs::write(&v, "").unwrap();
        let empty_fixture = tmp.path().join("empty.json");
        std::fs::write(&empty_fixture, "").unwrap();
        let driver = ToolDriver::mock(&empty_fixture, 0);
        let summary = parse_verilog(&v, tmp.path(), &driver, Duration::from_secs(5)).unwrap();
        assert!(summary.modules.is_empty());
    }

    #[test]
    fn two_module_json() {
        let raw = r#"{
          "modules": [
            {"name":"top","ports":[{"name":"clk","direction":"input","width":1}],"always_blocks":1},
            {"name":"leaf","ports":[],"always_blocks":0}
          ],
          "instantiations": [["top","leaf"]]
        }"#;
        let summary = parse_ast_json(raw).unwrap();
        assert_eq!(summary.modules.len(), 2);
        assert_eq!(summary.instantiations, vec![("top".into(), "leaf".into())]);
    }
}
