//! Chat-completion and embedding backends.
//!
//! [`HttpBackend`] speaks the common `/chat/completions` + `/embeddings` JSON
//! schema with bounded exponential-backoff retries. [`MockBackend`] is fully
//! deterministic: completions and embeddings are derived from SHA-256 of the
//! input, so whole pipeline runs are reproducible byte for byte.

use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("number of samples must be at least 1")]
    ZeroSamples,
    #[error("text {index} is empty; embeddings need non-empty input")]
    EmptyText { index: usize },
    #[error("invalid LLM config: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, LlmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => Err(LlmError::Config(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 3,
            base_backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSettings {
    /// Exact length of every mock completion, in characters.
    pub completion_chars: usize,
    pub embedding_dim: usize,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings {
            completion_chars: 480,
            embedding_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub backend: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub api_key_env: String,
    pub retry: RetryConfig,
    pub chars_per_token: usize,
    pub timeout_secs: u64,
    pub mock: MockSettings,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: BackendKind::Mock,
            endpoint_url: None,
            model_name: "gpt-4-turbo".to_string(),
            embedding_model: "text-embedding-3-small".to_string(),
            temperature: 0.5,
            max_output_tokens: 1024,
            api_key_env: "OPENAI_API_KEY".to_string(),
            retry: RetryConfig::default(),
            chars_per_token: 4,
            timeout_secs: 120,
            mock: MockSettings::default(),
        }
    }
}

impl LlmConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(LlmError::Config("retry.max_attempts must be >= 1".into()));
        }
        if self.chars_per_token == 0 {
            return Err(LlmError::Config("chars_per_token must be >= 1".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::Config("max_output_tokens must be >= 1".into()));
        }
        if self.backend == BackendKind::Http && self.endpoint_url.is_none() {
            return Err(LlmError::Config("http backend needs endpoint_url".into()));
        }
        if self.backend == BackendKind::Mock && self.mock.embedding_dim == 0 {
            return Err(LlmError::Config("mock.embedding_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn estimator(&self) -> TokenEstimator {
        TokenEstimator::new(self.chars_per_token)
    }
}

/// Character-ratio token estimate: `ceil(chars / chars_per_token)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenEstimator {
    chars_per_token: usize,
}

impl Default for TokenEstimator {
    fn default() -> Self {
        TokenEstimator { chars_per_token: 4 }
    }
}

impl TokenEstimator {
    pub fn new(chars_per_token: usize) -> Self {
        TokenEstimator {
            chars_per_token: chars_per_token.max(1),
        }
    }

    pub fn chars_per_token(&self) -> usize {
        self.chars_per_token
    }

    pub fn count(&self, text: &str) -> usize {
        self.count_chars(text.chars().count())
    }

    pub fn count_chars(&self, chars: usize) -> usize {
        chars.div_ceil(self.chars_per_token)
    }
}

/// Token estimate at the default ratio of 4 characters per token.
pub fn count_tokens(text: &str) -> usize {
    TokenEstimator::default().count(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LlmError::Protocol("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LlmError::Protocol("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A chat-completion + embedding provider.
pub trait LlmBackend: Send + Sync {
    /// `k` independent completions of `prompt`, ordered by sample index.
    fn sample(&self, prompt: &str, k: usize) -> Result<Vec<String>>;

    /// One vector per text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

fn check_sample_args(prompt: &str, k: usize) -> Result<()> {
    if prompt.is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    if k == 0 {
        return Err(LlmError::ZeroSamples);
    }
    Ok(())
}

fn check_embed_args(texts: &[String]) -> Result<()> {
    match texts.iter().position(|t| t.is_empty()) {
        Some(index) => Err(LlmError::EmptyText { index }),
        None => Ok(()),
    }
}

fn check_dims(vectors: &[EmbeddingVector]) -> Result<()> {
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.dim() != first.dim()) {
            return Err(LlmError::Protocol("embedding dimensions differ".into()));
        }
    }
    Ok(())
}

pub fn build_backend(config: &LlmConfig) -> Result<Box<dyn LlmBackend>> {
    config.validate()?;
    Ok(match config.backend {
        BackendKind::Mock => Box::new(MockBackend::new(config.mock)),
        BackendKind::Http => Box::new(HttpBackend::new(config)?),
    })
}

const MOCK_PHRASES: &[&str] = &[
    "the agent scans by turning in place before committing to a direction",
    "it moves toward the key as soon as the key enters its view",
    "after picking up the key it heads straight for the locked door",
    "episodes that start near the key finish in noticeably fewer steps",
    "the agent rarely drops the key once it holds it",
    "walls ahead trigger a turn rather than repeated forward moves",
    "cumulative reward is highest when the door is opened early",
    "some episodes show redundant turns while searching for the door",
    "the action distribution is dominated by forward moves and turns",
    "the limited field of view leads to occasional backtracking",
    "toggle is only issued when the door is directly ahead",
    "behaviour is consistent across episodes with small step-count variation",
];

/// Deterministic offline backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend {
    settings: MockSettings,
}

impl MockBackend {
    pub fn new(settings: MockSettings) -> Self {
        MockBackend { settings }
    }

    fn completion(&self, prompt: &str, index: usize) -> String {
        let digest = Sha256::new()
            .chain_update(prompt.as_bytes())
            .chain_update([0u8])
            .chain_update((index as u64).to_le_bytes())
            .finalize();
        let tag = hex::encode(&digest[..6]);
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let lines = prompt.lines().count();
        let mut text = format!(
            "Candidate {} [{tag}]: summary of {lines} input lines. ",
            index + 1
        );
        while text.len() < self.settings.completion_chars {
            let phrase = MOCK_PHRASES[rng.gen_range(0..MOCK_PHRASES.len())];
            text.push_str(phrase);
            text.push_str(". ");
        }
        text.truncate(self.settings.completion_chars);
        text.trim_end().to_string()
    }

    fn embedding(&self, text: &str) -> EmbeddingVector {
        let digest = Sha256::digest(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        let values = (0..self.settings.embedding_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        EmbeddingVector { values }
    }
}

impl LlmBackend for MockBackend {
    fn sample(&self, prompt: &str, k: usize) -> Result<Vec<String>> {
        check_sample_args(prompt, k)?;
        Ok((0..k).map(|i| self.completion(prompt, i)).collect())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_embed_args(texts)?;
        Ok(texts.iter().map(|t| self.embedding(t)).collect())
    }
}

/// Wraps a backend and records every prompt passed to `sample`.
pub struct Recorder<B> {
    inner: B,
    prompts: Mutex<Vec<String>>,
}

impl<B: LlmBackend> Recorder<B> {
    pub fn new(inner: B) -> Self {
        Recorder {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Recorded prompts, sorted so the result does not depend on scheduling.
    pub fn prompts(&self) -> Vec<String> {
        let mut p = self.prompts.lock().expect("recorder lock").clone();
        p.sort();
        p
    }
}

impl<B: LlmBackend> LlmBackend for Recorder<B> {
    fn sample(&self, prompt: &str, k: usize) -> Result<Vec<String>> {
        self.prompts
            .lock()
            .expect("recorder lock")
            .push(prompt.to_string());
        self.inner.sample(prompt, k)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.inner.embed(texts)
    }
}

/// Backend for any server exposing `POST {endpoint}/chat/completions` and
/// `POST {endpoint}/embeddings`.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    config: LlmConfig,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &LlmConfig) -> Result<Self> {
        let endpoint = config
            .endpoint_url
            .clone()
            .ok_or_else(|| LlmError::Config("http backend needs endpoint_url".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key: std::env::var(&config.api_key_env).ok(),
            config: config.clone(),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{path}", self.endpoint);
        let max = self.config.retry.max_attempts;
        let mut last_error = String::new();
        for attempt in 1..=max {
            if attempt > 1 {
                let backoff = self.config.retry.base_backoff_ms << (attempt - 2).min(16);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let text = match resp.text() {
                Ok(t) => t,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            if status.is_success() {
                return serde_json::from_str(&text)
                    .map_err(|e| LlmError::Protocol(format!("invalid JSON from {path}: {e}")));
            }
            if status.as_u16() == 429 || status.is_server_error() {
                last_error = format!("HTTP {}: {text}", status.as_u16());
                continue;
            }
            return Err(LlmError::Status {
                status: status.as_u16(),
                attempts: attempt,
                body: text,
            });
        }
        Err(LlmError::Transport {
            attempts: max,
            message: last_error,
        })
    }

    fn complete_once(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp = self.post("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Protocol("response has no choices[0].message.content".into()))
    }
}

impl LlmBackend for HttpBackend {
    fn sample(&self, prompt: &str, k: usize) -> Result<Vec<String>> {
        check_sample_args(prompt, k)?;
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..k)
                .map(|_| scope.spawn(|| self.complete_once(prompt)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("completion thread panicked"))
                .collect()
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_embed_args(texts)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({"model": self.config.embedding_model, "input": texts});
        let resp = self.post("embeddings", &body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Protocol("embedding response has no data array".into()))?;
        let mut rows: Vec<(u64, EmbeddingVector)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| LlmError::Protocol("embedding item has no vector".into()))?
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| LlmError::Protocol("non-numeric embedding value".into()))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((index, EmbeddingVector::new(values)?));
        }
        if rows.len() != texts.len() {
            return Err(LlmError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                rows.len()
            )));
        }
        rows.sort_by_key(|(i, _)| *i);
        let vectors: Vec<EmbeddingVector> = rows.into_iter().map(|(_, v)| v).collect();
        check_dims(&vectors)?;
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn token_estimates() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("abcdefgh"), 2);
        assert_eq!(count_tokens("abcdefghi"), 3);
        assert_eq!(TokenEstimator::new(3).count("abcdefg"), 3);
    }

    proptest! {
        #[test]
        fn token_count_subadditive(a in ".{0,200}", b in ".{0,200}") {
            let ab = format!("{a}{b}");
            prop_assert!(count_tokens(&ab) <= count_tokens(&a) + count_tokens(&b) + 1);
            prop_assert!(count_tokens(&ab) >= count_tokens(&a));
        }
    }

    #[test]
    fn mock_sampling_is_deterministic_and_prefix_stable() {
        let m = MockBackend::default();
        let a = m.sample("summarize this", 3).unwrap();
        let b = m.sample("summarize this", 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.sample("summarize this", 1).unwrap()[0], a[0]);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|t| t.len() <= MockSettings::default().completion_chars));
    }

    #[test]
    fn mock_sampling_preconditions() {
        let m = MockBackend::default();
        assert!(matches!(m.sample("", 1), Err(LlmError::EmptyPrompt)));
        assert!(matches!(m.sample("x", 0), Err(LlmError::ZeroSamples)));
    }

    #[test]
    fn mock_embeddings() {
        let m = MockBackend::default();
        let same = m.embed(&["a".into(), "a".into()]).unwrap();
        assert_eq!(same[0], same[1]);
        let diff = m.embed(&["a".into(), "b".into()]).unwrap();
        assert_ne!(diff[0], diff[1]);
        assert_eq!(diff[0].dim(), 64);
        assert!(matches!(
            m.embed(&["a".into(), String::new()]),
            Err(LlmError::EmptyText { index: 1 })
        ));
    }

    #[test]
    fn mock_embeddings_do_not_collide_on_a_corpus() {
        let m = MockBackend::default();
        let texts: Vec<String> = (0..500).map(|i| format!("text {i}")).collect();
        let vecs = m.embed(&texts).unwrap();
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                assert_ne!(vecs[i], vecs[j]);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(LlmConfig::default().validate().is_ok());
        let mut c = LlmConfig::default();
        c.retry.max_attempts = 0;
        assert!(c.validate().is_err());
        let c = LlmConfig {
            backend: BackendKind::Http,
            ..LlmConfig::default()
        };
        assert!(c.validate().is_err());
        let parsed: LlmConfig = serde_json::from_str(r#"{"backend":"mock"}"#).unwrap();
        assert_eq!(parsed.temperature, 0.5);
    }

    #[test]
    fn embedding_vector_rejects_nan() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        let v = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.norm(), 5.0);
    }
}
