//! The single declarative run configuration.
//!
//! One TOML document captures every knob: model profiles per role, driver
//! selection per skill, sandbox mode, budgets, and output location. Secrets
//! never live in the file — `${VAR}` references are interpolated from the
//! environment at load time, and the config hash is computed over the raw
//! (uninterpolated) text so it is stable across machines.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use chipbench_core::agent::AgentConfig;
use chipbench_core::gateway::{
    ChatBackend, HashEmbedder, HttpAdapter, HttpChatBackend, ModelProfile, ReplayBackend,
};
use chipbench_core::kb::VectorStore;
use chipbench_core::sandbox::{ExecMode, Sandbox, ScriptRule};
use chipbench_core::skills::{FlowDriver, FlowOutcome, SkillTimeouts, ToolDriver};
use chipbench_core::task::RunLimits;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub agent: ModelSection,
    pub judge: ModelSection,
    #[serde(default)]
    pub embedder: EmbedderSection,
    #[serde(default)]
    pub kb: KbSection,
    #[serde(default)]
    pub drivers: DriverSection,
    #[serde(default)]
    pub sandbox: SandboxSection,
    #[serde(default)]
    pub limits: Option<LimitsSection>,
    /// Raw config text hash; filled in by the loader.
    #[serde(skip)]
    pub config_hash: String,
    /// Directory the config file lives in; relative paths resolve from here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub model_id: String,
    #[serde(default)]
    pub input_cost_per_1k_tokens: f64,
    #[serde(default)]
    pub output_cost_per_1k_tokens: f64,
    #[serde(default = "default_context")]
    pub max_context_tokens: u64,
    /// JSONL replay script; when set, the backend is deterministic replay.
    #[serde(default)]
    pub replay_script: Option<PathBuf>,
    /// Live HTTP backend; used when no replay script is set.
    #[serde(default)]
    pub api: Option<ApiSection>,
}

fn default_context() -> u64 {
    200_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSection {
    pub endpoint: String,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    pub api_key_env: String,
}

fn default_auth_header() -> String {
    "authorization".into()
}

fn default_auth_prefix() -> String {
    "Bearer ".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        EmbedderSection { dim: default_dim() }
    }
}

fn default_dim() -> usize {
    64
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSection {
    #[serde(default)]
    pub store_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    #[serde(default)]
    pub lint: Option<ToolDriverSpec>,
    #[serde(default)]
    pub sim: Option<ToolDriverSpec>,
    #[serde(default)]
    pub ast: Option<ToolDriverSpec>,
    #[serde(default)]
    pub flow: Option<FlowDriverSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum ToolDriverSpec {
    Real {
        argv: Vec<String>,
    },
    Mock {
        fixture: PathBuf,
        #[serde(default)]
        exit_code: i32,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum FlowDriverSpec {
    Real {
        argv: Vec<String>,
    },
    Mock {
        #[serde(default = "default_true")]
        emit_gds: bool,
        #[serde(default)]
        metrics_fixture: Option<PathBuf>,
        /// When set, the mock flow fails at this stage instead.
        #[serde(default)]
        fail_at_stage: Option<String>,
        #[serde(default)]
        fail_log_excerpt: Option<String>,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSection {
    #[serde(default = "default_sandbox_mode")]
    pub mode: String,
    /// Argv template for container mode; `{workspace}` and `{command}`
    /// placeholders are substituted.
    #[serde(default)]
    pub container_template: Vec<String>,
    /// Canned outputs for scripted mode, matched by substring in order.
    #[serde(default, rename = "rule")]
    pub rules: Vec<ShellRuleSpec>,
}

impl Default for SandboxSection {
    fn default() -> Self {
        SandboxSection {
            mode: default_sandbox_mode(),
            container_template: Vec::new(),
            rules: Vec::new(),
        }
    }
}

fn default_sandbox_mode() -> String {
    "direct".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellRuleSpec {
    pub pattern: String,
    #[serde(default)]
    pub stdout: Option<String>,
    #[serde(default)]
    pub stdout_fixture: Option<PathBuf>,
    #[serde(default)]
    pub stderr: Option<String>,
    #[serde(default)]
    pub exit_code: i32,
    #[serde(default)]
    pub once: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub max_cost_usd: Option<f64>,
}

/// Replace every `${VAR}` with the environment value; unset variables are an
/// error so misconfigured secrets fail loudly.
pub fn interpolate_env(text: &str) -> Result<String> {
    let re = regex_lite(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}");
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let var = &caps[1];
        let value = std::env::var(var)
            .with_context(|| format!("config references unset environment variable `{var}`"))?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(&value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

fn regex_lite(pattern: &str) -> regex::Regex {
    regex::Regex::new(pattern).expect("static regex")
}

impl RunConfig {
    /// Load, interpolate, validate. The hash covers the raw on-disk bytes.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let interpolated = interpolate_env(&raw)?;
        let mut config: RunConfig = toml::from_str(&interpolated)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.config_hash = format!("{:x}", Sha256::digest(raw.as_bytes()));
        config.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.parallelism < 1 {
            bail!("parallelism must be ≥ 1");
        }
        for (name, spec) in [
            ("lint", &self.drivers.lint),
            ("sim", &self.drivers.sim),
            ("ast", &self.drivers.ast),
        ] {
            if let Some(ToolDriverSpec::Mock { fixture, .. }) = spec {
                if !self.resolve(fixture).is_file() {
                    bail!("drivers.{name}: mock fixture {} does not exist", fixture.display());
                }
            }
        }
        if let Some(FlowDriverSpec::Mock {
            metrics_fixture: Some(f),
            ..
        }) = &self.drivers.flow
        {
            if !self.resolve(f).is_file() {
                bail!("drivers.flow: metrics fixture {} does not exist", f.display());
            }
        }
        match self.sandbox.mode.as_str() {
            "direct" | "scripted" => {}
            "container" if !self.sandbox.container_template.is_empty() => {}
            "container" => bail!("sandbox.mode = container requires container_template"),
            other => bail!("unknown sandbox mode `{other}`"),
        }
        Ok(())
    }

    /// Resolve a configured path relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn profile(section: &ModelSection) -> ModelProfile {
        ModelProfile {
            model_id: section.model_id.clone(),
            input_cost_per_1k_tokens: decimal_from_f64(section.input_cost_per_1k_tokens),
            output_cost_per_1k_tokens: decimal_from_f64(section.output_cost_per_1k_tokens),
            max_context_tokens: section.max_context_tokens,
        }
    }

    pub fn backend(&self, section: &ModelSection) -> Result<Box<dyn ChatBackend>> {
        if let Some(script) = &section.replay_script {
            let backend = ReplayBackend::from_jsonl(&self.resolve(script))
                .with_context(|| format!("loading replay script {}", script.display()))?;
            return Ok(Box::new(backend));
        }
        let api = section.api.as_ref().with_context(|| {
            format!(
                "model `{}` has neither a replay_script nor an [api] section",
                section.model_id
            )
        })?;
        Ok(Box::new(HttpChatBackend::new(HttpAdapter {
            endpoint: api.endpoint.clone(),
            model: section.model_id.clone(),
            auth_header: api.auth_header.clone(),
            auth_prefix: api.auth_prefix.clone(),
            api_key_env: api.api_key_env.clone(),
        })))
    }

    fn tool_driver(&self, spec: &Option<ToolDriverSpec>, default_argv: &[&str]) -> ToolDriver {
        match spec {
            Some(ToolDriverSpec::Real { argv }) => ToolDriver::Real { argv: argv.clone() },
            Some(ToolDriverSpec::Mock { fixture, exit_code }) => {
                ToolDriver::mock(self.resolve(fixture), *exit_code)
            }
            None => ToolDriver::Real {
                argv: default_argv.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn flow_driver(&self) -> FlowDriver {
        match &self.drivers.flow {
            Some(FlowDriverSpec::Real { argv }) => FlowDriver::Real { argv: argv.clone() },
            Some(FlowDriverSpec::Mock {
                emit_gds,
                metrics_fixture,
                fail_at_stage,
                fail_log_excerpt,
            }) => {
                let outcome = match fail_at_stage {
                    Some(stage) => FlowOutcome::FailAt {
                        stage: stage.clone(),
                        log_excerpt: fail_log_excerpt
                            .clone()
                            .unwrap_or_else(|| "flow failed".into()),
                    },
                    None => FlowOutcome::Succeed {
                        emit_gds: *emit_gds,
                        metrics_fixture: metrics_fixture.as_ref().map(|f| self.resolve(f)),
                    },
                };
                FlowDriver::Mock { outcome }
            }
            None => FlowDriver::Real {
                argv: vec!["openlane".into(), "{config}".into()],
            },
        }
    }

    pub fn limits(&self, task_limits: &RunLimits) -> RunLimits {
        let mut limits = task_limits.clone();
        if let Some(section) = &self.limits {
            if let Some(steps) = section.max_steps {
                limits.max_steps = steps;
            }
            if let Some(cost) = section.max_cost_usd {
                limits.max_cost_usd = decimal_from_f64(cost);
            }
        }
        limits
    }

    /// Build the sandbox for one workspace according to the configured mode.
    pub fn sandbox(&self, workspace: &Path) -> Result<Sandbox> {
        let sandbox = match self.sandbox.mode.as_str() {
            "direct" => Sandbox::direct(workspace)?,
            "container" => Sandbox::new(
                workspace,
                ExecMode::ContainerTemplate(self.sandbox.container_template.clone()),
            )?,
            "scripted" => {
                let mut rules = Vec::new();
                for spec in &self.sandbox.rules {
                    let stdout = match (&spec.stdout, &spec.stdout_fixture) {
                        (Some(s), _) => s.clone(),
                        (None, Some(f)) => std::fs::read_to_string(self.resolve(f))
                            .with_context(|| format!("shell rule fixture {}", f.display()))?,
                        (None, None) => String::new(),
                    };
                    let mut rule = ScriptRule::always(&spec.pattern, stdout, spec.exit_code);
                    rule.stderr = spec.stderr.clone().unwrap_or_default();
                    rule.once = spec.once;
                    rules.push(rule);
                }
                Sandbox::scripted(workspace, rules)?
            }
            other => bail!("unknown sandbox mode `{other}`"),
        };
        Ok(sandbox)
    }

    /// Assemble the full agent configuration for one task.
    pub fn agent_config(&self, task_limits: &RunLimits) -> Result<AgentConfig> {
        let store = match &self.kb.store_dir {
            Some(dir) if self.resolve(dir).is_dir() => {
                let embedder = Arc::new(HashEmbedder::new(self.embedder.dim));
                Some(Arc::new(
                    chipbench_core::kb::load_store(&self.resolve(dir), embedder)
                        .context("loading knowledge-base store")?,
                ))
            }
            _ => None,
        };
        Ok(AgentConfig {
            profile: Self::profile(&self.agent),
            decode: Default::default(),
            limits: self.limits(task_limits),
            timeouts: SkillTimeouts::default(),
            lint_driver: self.tool_driver(&self.drivers.lint, &["verilator", "--lint-only", "-Wall", "{path}"]),
            sim_driver: self.tool_driver(&self.drivers.sim, &["make", "-C", "{workdir}"]),
            ast_driver: self.tool_driver(&self.drivers.ast, &["verilog-ast", "{path}"]),
            flow_driver: self.flow_driver(),
            store,
            context_char_budget: 24_000,
            shell_timeout: std::time::Duration::from_secs(600),
        })
    }

    pub fn embedder(&self) -> Arc<HashEmbedder> {
        Arc::new(HashEmbedder::new(self.embedder.dim))
    }

    pub fn new_store(&self) -> VectorStore {
        VectorStore::new(self.embedder())
    }
}

fn decimal_from_f64(v: f64) -> rust_decimal::Decimal {
    // configs carry small dollar figures; string round-trip avoids binary
    // float artifacts in cost arithmetic
    format!("{v}").parse().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    const MINIMAL: &str = r#"
[agent]
model_id = "agent-model"

[judge]
model_id = "judge-model"
"#;

    #[test]
    fn minimal_config_loads_with_defaults() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("bench.toml");
        fs::write(&path, MINIMAL).unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.parallelism, 1);
        assert_eq!(config.out_dir, PathBuf::from("out"));
        assert_eq!(config.embedder.dim, 64);
        assert_eq!(config.config_hash.len(), 64);
    }

    #[test]
    fn env_interpolation_substitutes_and_fails_loudly() {
        std::env::set_var("CHIPBENCH_TEST_KEY_VAR", "SECRET_ENV");
        let text = "api_key_env = \"${CHIPBENCH_TEST_KEY_VAR}\"";
        assert_eq!(
            interpolate_env(text).unwrap(),
            "api_key_env = \"SECRET_ENV\""
        );
        assert!(interpolate_env("x = \"${CHIPBENCH_DEFINITELY_UNSET_VAR}\"").is_err());
    }

    #[test]
    fn hash_is_over_raw_text_not_interpolation() {
        std::env::set_var("CHIPBENCH_HASH_VAR", "a");
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("bench.toml");
        let body = format!("{MINIMAL}\n# ${{CHIPBENCH_HASH_VAR}}\n");
        fs::write(&path, &body).unwrap();
        let h1 = RunConfig::load(&path).unwrap().config_hash;
        std::env::set_var("CHIPBENCH_HASH_VAR", "b");
        let h2 = RunConfig::load(&path).unwrap().config_hash;
        assert_eq!(h1, h2);
    }

    #[test]
    fn missing_mock_fixture_is_a_load_error() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("bench.toml");
        fs::write(
            &path,
            format!("{MINIMAL}\n[drivers.lint]\nmode = \"mock\"\nfixture = \"nope.txt\"\n"),
        )
        .unwrap();
        let err = RunConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn zero_parallelism_rejected() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("bench.toml");
        fs::write(&path, format!("parallelism = 0\n{MINIMAL}")).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }
}
