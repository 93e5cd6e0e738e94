//! TOML run configuration. API keys come from the environment only; the
//! file names the variable to read.

use std::path::{Path, PathBuf};
use std::time::Duration;

use evtab_core::backend::{build_backend, BackendConfig, ModelBackend, RegistryError};
use evtab_core::evaluation::Tolerance;
use evtab_core::pipeline::PipelineOptions;
use evtab_core::prompts::PromptSet;
use evtab_core::retrieval::{EmbeddingProvider, HashEmbedder, HttpEmbedder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Backend(#[from] RegistryError),
    #[error("embedder: {0}")]
    Embedder(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    /// `hash` (offline) or `openai-compatible`.
    pub name: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_dimension() -> usize {
    32
}

fn default_timeout() -> u64 {
    60
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            name: "hash".into(),
            dimension: default_dimension(),
            endpoint: None,
            model: None,
            api_key_env: None,
            timeout_secs: default_timeout(),
        }
    }
}

fn default_backend() -> BackendConfig {
    BackendConfig::named("mock")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub pipeline: PipelineOptions,
    /// Extraction backend, shared by both agents.
    #[serde(default = "default_backend")]
    pub backend: BackendConfig,
    /// Defaults to the extraction backend.
    #[serde(default)]
    pub reconciliation: Option<BackendConfig>,
    /// Without a judge, free-text cells use word-set containment.
    #[serde(default)]
    pub judge: Option<BackendConfig>,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub evaluation: Tolerance,
    /// Directory of prompt overrides.
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pipeline: PipelineOptions::default(),
            backend: default_backend(),
            reconciliation: None,
            judge: None,
            embedder: EmbedderConfig::default(),
            evaluation: Tolerance::default(),
            prompts_dir: None,
        }
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<Config, ConfigError> {
    let config: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: Option<&Path>) -> Result<Config, ConfigError> {
    match path {
        None => Ok(Config::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            parse_config(&text, path)
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.evaluation;
        if !(t.rel_tol.is_finite() && t.rel_tol >= 0.0 && t.abs_tol.is_finite() && t.abs_tol >= 0.0) {
            return Err(ConfigError::Invalid("tolerances must be finite and non-negative".into()));
        }
        if self.embedder.dimension == 0 {
            return Err(ConfigError::Embedder("dimension must be at least 1".into()));
        }
        Ok(())
    }

    pub fn extraction_backend(&self) -> Result<Box<dyn ModelBackend>, ConfigError> {
        Ok(build_backend(&self.backend)?)
    }

    pub fn reconciliation_backend(&self) -> Result<Box<dyn ModelBackend>, ConfigError> {
        Ok(build_backend(self.reconciliation.as_ref().unwrap_or(&self.backend))?)
    }

    pub fn judge_backend(&self) -> Result<Option<Box<dyn ModelBackend>>, ConfigError> {
        self.judge.as_ref().map(|c| build_backend(c).map_err(ConfigError::from)).transpose()
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        let e = &self.embedder;
        match e.name.as_str() {
            "hash" => Ok(Box::new(HashEmbedder::new(e.dimension))),
            "openai-compatible" => Ok(Box::new(HttpEmbedder {
                endpoint: e.endpoint.clone().ok_or_else(|| ConfigError::Embedder("endpoint is required".into()))?,
                model: e.model.clone().ok_or_else(|| ConfigError::Embedder("model is required".into()))?,
                api_key_env: e.api_key_env.clone().unwrap_or_else(|| "OPENAI_API_KEY".into()),
                timeout: Duration::from_secs(e.timeout_secs),
            })),
            other => Err(ConfigError::Embedder(format!("unknown embedder `{other}`"))),
        }
    }

    pub fn prompts(&self) -> Result<PromptSet, ConfigError> {
        match &self.prompts_dir {
            None => Ok(PromptSet::default()),
            Some(dir) => PromptSet::from_dir(dir).map_err(|e| ConfigError::Invalid(format!("prompts: {e}"))),
        }
    }
}
