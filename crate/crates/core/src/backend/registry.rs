//! Backend selection by name and in-flight limiting.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mock::MockBackend;
use super::{ModelBackend, ModelRequest, OpenAiCompatBackend, RawReply, TransportError};

const GEMINI_OPENAI_ENDPOINT: &str = "https://generativelanguage.googleapis.com/v1beta/openai";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_in_flight() -> usize {
    4
}

fn default_retry_limit() -> u32 {
    super::invoke::DEFAULT_RETRY_LIMIT
}

fn default_timeout_secs() -> u64 {
    120
}

impl BackendConfig {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            model: None,
            endpoint: None,
            api_key_env: None,
            max_in_flight: default_max_in_flight(),
            retry_limit: default_retry_limit(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("unknown backend `{0}`")]
    Unknown(String),
    #[error("backend `{backend}` requires `{field}`")]
    Missing { backend: String, field: &'static str },
    #[error("max_in_flight must be at least 1")]
    ZeroInFlight,
}

/// Builds the backend named in `config`, wrapped in an in-flight limiter.
pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn ModelBackend>, RegistryError> {
    if config.max_in_flight == 0 {
        return Err(RegistryError::ZeroInFlight);
    }
    let timeout = Duration::from_secs(config.timeout_secs);
    let inner: Box<dyn ModelBackend> = match config.name.as_str() {
        "mock" => Box::new(MockBackend::new()),
        "gemini-flash" => Box::new(OpenAiCompatBackend {
            name: config.name.clone(),
            endpoint: config
                .endpoint
                .clone()
                .unwrap_or_else(|| GEMINI_OPENAI_ENDPOINT.to_string()),
            model: config.model.clone().unwrap_or_else(|| "gemini-2.5-flash".to_string()),
            api_key_env: config.api_key_env.clone().unwrap_or_else(|| "GEMINI_API_KEY".to_string()),
            timeout,
        }),
        "openai-compatible" => {
            let missing = |field| RegistryError::Missing {
                backend: config.name.clone(),
                field,
            };
            Box::new(OpenAiCompatBackend {
                name: config.name.clone(),
                endpoint: config.endpoint.clone().ok_or_else(|| missing("endpoint"))?,
                model: config.model.clone().ok_or_else(|| missing("model"))?,
                api_key_env: config.api_key_env.clone().unwrap_or_else(|| "OPENAI_API_KEY".to_string()),
                timeout,
            })
        }
        other => return Err(RegistryError::Unknown(other.to_string())),
    };
    Ok(Box::new(Throttled::new(inner, config.max_in_flight)))
}

/// Caps concurrent `complete` calls on the wrapped backend.
pub struct Throttled {
    inner: Box<dyn ModelBackend>,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Throttled {
    pub fn new(inner: Box<dyn ModelBackend>, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

struct Permit<'a>(&'a Throttled);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("throttle lock") -= 1;
        self.0.freed.notify_one();
    }
}

impl ModelBackend for Throttled {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn accepts_native_documents(&self) -> bool {
        self.inner.accepts_native_documents()
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        let mut n = self.in_flight.lock().expect("throttle lock");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("throttle lock");
        }
        *n += 1;
        drop(n);
        let _permit = Permit(self);
        self.inner.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_names() {
        assert_eq!(build_backend(&BackendConfig::named("mock")).unwrap().name(), "mock");
        assert_eq!(
            build_backend(&BackendConfig::named("gemini-flash")).unwrap().name(),
            "gemini-flash"
        );
        assert!(matches!(
            build_backend(&BackendConfig::named("gpt-9")),
            Err(RegistryError::Unknown(_))
        ));
        assert!(matches!(
            build_backend(&BackendConfig::named("openai-compatible")),
            Err(RegistryError::Missing { field: "endpoint", .. })
        ));
    }
}
