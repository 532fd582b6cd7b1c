use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ceilguard_core::eval::EvalConfig;
use ceilguard_core::{GeneratorConfig, PipelineConfig};
use serde::{Deserialize, Serialize};

pub const BIND_ENV: &str = "CEILGUARD_BIND";
pub const BUNDLE_ENV: &str = "CEILGUARD_BUNDLE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub bind: String,
    pub bundle: Option<PathBuf>,
    /// JSON-lines audit file; auditing is off when absent.
    pub audit_log: Option<PathBuf>,
    pub audit_queue: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), bundle: None, audit_log: None, audit_queue: 65_536 }
    }
}

/// The single JSON config file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub generator: GeneratorConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub serve: ServeConfig,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
