use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use regrepair_core::gateway::{CostModel, ModelConfig};
use regrepair_core::prompt::{LoopConfig, PromptMode, Strategy};
use regrepair_core::repair::RepairConfig;
use serde::Deserialize;

/// Experiment description loaded from a TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub bug_store_path: PathBuf,
    #[serde(default)]
    pub bug_filter: Option<Vec<String>>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub cost_model: Option<CostModel>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_mode")]
    pub mode: PromptMode,
    #[serde(default = "default_sampling")]
    pub sampling_size: u32,
    #[serde(default = "default_conv_len")]
    pub max_conversation_length: u32,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub test_timeout: f64,
    #[serde(default = "yes")]
    pub full_suite: bool,
    #[serde(default = "one")]
    pub parallelism: usize,
}

fn default_strategy() -> Strategy {
    Strategy::Conversational
}
fn default_mode() -> PromptMode {
    PromptMode::WithBic
}
fn default_sampling() -> u32 {
    10
}
fn default_conv_len() -> u32 {
    5
}
fn default_timeout() -> f64 {
    300.0
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn with_store(store: PathBuf) -> Self {
        ExperimentConfig {
            bug_store_path: store,
            bug_filter: None,
            label: None,
            model: ModelConfig::default(),
            cost_model: None,
            strategy: default_strategy(),
            mode: default_mode(),
            sampling_size: default_sampling(),
            max_conversation_length: default_conv_len(),
            test_timeout: default_timeout(),
            full_suite: true,
            parallelism: 1,
        }
    }

    /// Reads the file, substitutes `${VAR}` from the environment and resolves
    /// a relative store path against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let text = interpolate(&raw, |k| std::env::var(k).ok())?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.bug_store_path.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.bug_store_path = base.join(&cfg.bug_store_path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampling_size < 1 {
            bail!("sampling_size must be >= 1");
        }
        if self.max_conversation_length < 1 {
            bail!("max_conversation_length must be >= 1");
        }
        if self.parallelism < 1 {
            bail!("parallelism must be >= 1");
        }
        if !(self.test_timeout > 0.0 && self.test_timeout.is_finite()) {
            bail!("test_timeout must be a positive number of seconds");
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn cost(&self) -> CostModel {
        self.cost_model
            .or_else(|| CostModel::for_model(&self.model.model_name))
            .unwrap_or(CostModel::GPT_4O)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let s = match self.strategy {
                Strategy::ZeroShot => "zero-shot",
                Strategy::Conversational => "conversational",
            };
            let m = match self.mode {
                PromptMode::Baseline => "baseline",
                PromptMode::WithBic => "with-bic",
            };
            format!("{s}/{m}")
        })
    }

    pub fn repair_config(&self) -> RepairConfig {
        RepairConfig {
            strategy: self.strategy,
            mode: self.mode,
            loop_cfg: LoopConfig {
                sampling_size: self.sampling_size,
                max_conversation_length: self.max_conversation_length,
            },
            full_suite: self.full_suite,
            test_timeout: Duration::from_secs_f64(self.test_timeout),
            model: self.model.clone(),
            cost: self.cost(),
        }
    }
}

/// Replaces `${NAME}` with `lookup(NAME)`. `$$` escapes a dollar sign.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 1..];
        if let Some(t) = tail.strip_prefix('$') {
            out.push('$');
            rest = t;
        } else if let Some(t) = tail.strip_prefix('{') {
            let Some(end) = t.find('}') else {
                bail!("unterminated ${{...}} in config");
            };
            let name = &t[..end];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                bail!("invalid variable name `{name}` in config");
            }
            match lookup(name) {
                Some(v) => out.push_str(&v),
                None => bail!("environment variable {name} is not set"),
            }
            rest = &t[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}
