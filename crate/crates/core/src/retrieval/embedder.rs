//! Embedding providers.

use std::hash::Hasher;
use std::time::Duration;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use super::EmbeddingVector;

#[derive(Debug, Clone, Error)]
#[error("embedding provider error: {message}")]
pub struct EmbedError {
    pub message: String,
    pub retryable: bool,
}

impl EmbedError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Turns texts into vectors, one per input, in input order.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// Offline provider producing stable pseudo-random vectors from word content.
///
/// Each lower-cased word seeds a generator; a text's vector is the sum of
/// its words' vectors, so texts sharing words land close together.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension: dimension.max(1),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn add_seeded(&self, acc: &mut [f64], key: &str) {
        let mut h = FnvHasher::default();
        h.write(key.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        for slot in acc.iter_mut() {
            *slot += rng.random_range(-1.0..1.0);
        }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0; self.dimension];
        let mut any = false;
        for word in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            self.add_seeded(&mut acc, &word.to_lowercase());
            any = true;
        }
        if !any {
            self.add_seeded(&mut acc, text);
        }
        EmbeddingVector(acc)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout: Duration,
}

impl HttpEmbedder {
    fn api_key(&self) -> Result<String, EmbedError> {
        std::env::var(&self.api_key_env)
            .map_err(|_| EmbedError::fatal(format!("environment variable {} is not set", self.api_key_env)))
    }
}

/// Decodes an `/embeddings` response body, restoring input order by `index`.
pub fn parse_embedding_response(body: &Value, expected: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| EmbedError::fatal("response has no `data` array"))?;
    if data.len() != expected {
        return Err(EmbedError::fatal(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::fatal(format!("item {pos} has no embedding")))?
            .iter()
            .map(|v| v.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| EmbedError::fatal(format!("item {pos} has non-numeric values")))?;
        let slot = slots
            .get_mut(index)
            .ok_or_else(|| EmbedError::fatal(format!("item index {index} out of range")))?;
        if slot.replace(EmbeddingVector(values)).is_some() {
            return Err(EmbedError::fatal(format!("duplicate item index {index}")));
        }
    }
    slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| EmbedError::fatal("response is missing items"))
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        "http"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let key = self.api_key()?;
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut response = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(json!({ "model": self.model, "input": texts }))
            .map_err(|e| EmbedError::retryable(e.to_string()))?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::retryable(e.to_string()))?;
        parse_embedding_response(&body, texts.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_stable() {
        let e = HashEmbedder::new(16);
        assert_eq!(e.embed_one("overall survival"), e.embed_one("Overall  survival"));
        assert_ne!(e.embed_one("overall survival"), e.embed_one("adverse events"));
        assert!(e.embed_one("").0.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn response_reordered_by_index() {
        let body = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        let v = parse_embedding_response(&body, 2).unwrap();
        assert_eq!(v[0].0, vec![1.0, 0.0]);
        assert!(parse_embedding_response(&body, 3).is_err());
        let dup = json!({"data": [{"index": 0, "embedding": [1.0]}, {"index": 0, "embedding": [1.0]}]});
        assert!(parse_embedding_response(&dup, 2).is_err());
    }
}
