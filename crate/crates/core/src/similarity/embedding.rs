use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::SimilarityError;
use crate::digest::splitmix64;
use crate::providers::{CacheKey, CacheStore, RetryPolicy, Transport};

/// A non-zero real vector with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimilarityError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::DegenerateVector);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(SimilarityError::DegenerateVector);
        }
        Ok(Self { values, norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic hashed character-trigram embedding.
///
/// Each 3-gram of the lowercased text lands in one of `dim` buckets with a
/// seed-dependent sign; the bucket counts are then L2-normalized. Texts
/// shorter than three characters contribute themselves as a single gram.
pub fn mock_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector, SimilarityError> {
    if dim < 2 {
        return Err(SimilarityError::InvalidDim(dim));
    }
    if text.trim().is_empty() {
        return Err(SimilarityError::EmptyText);
    }
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut buckets = vec![0.0f64; dim];
    let add = |buckets: &mut [f64], gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = splitmix64(fnv1a(s.as_bytes()) ^ splitmix64(seed));
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        buckets[bucket] += sign;
    };
    if chars.len() < 3 {
        add(&mut buckets, &chars);
    } else {
        for gram in chars.windows(3) {
            add(&mut buckets, gram);
        }
    }
    if buckets.iter().all(|v| *v == 0.0) {
        // Every gram cancelled out; fall back to the whole text as one gram.
        add(&mut buckets, &chars);
    }
    let norm = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
    EmbeddingVector::new(buckets.into_iter().map(|v| v / norm).collect())
}

pub trait Embedder: Send + Sync {
    /// Stable description recorded in run manifests.
    fn identity(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, SimilarityError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Embedder for MockEmbedder {
    fn identity(&self) -> String {
        format!("mock-trigram(dim={}, seed={})", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, SimilarityError> {
        mock_embed(text, self.dim, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Live,
    Replay,
    #[default]
    Mock,
}

/// `[embedding]` section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub mode: EmbeddingMode,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    3
}

impl EmbeddingConfig {
    pub fn mock(dim: usize, seed: u64) -> Self {
        Self {
            mode: EmbeddingMode::Mock,
            dim,
            seed,
            endpoint_url: None,
            model: None,
            auth_env: None,
            request_timeout: default_timeout(),
            max_retries: default_retries(),
            fixture_dir: None,
        }
    }
}

/// Embedding provider speaking `{"model", "input": [..]}` / `{"data": [{"embedding": [..]}]}`.
pub struct HttpEmbedder {
    config: EmbeddingConfig,
    transport: Option<Arc<dyn Transport>>,
    cache: Option<Arc<CacheStore>>,
    fixtures: Option<CacheStore>,
    retry: RetryPolicy,
}

impl HttpEmbedder {
    /// `transport` is only consulted in live mode; replay reads `fixtures` exclusively.
    pub fn new(
        config: EmbeddingConfig,
        transport: Option<Arc<dyn Transport>>,
        cache: Option<Arc<CacheStore>>,
    ) -> Result<Self, SimilarityError> {
        let fixtures = match config.mode {
            EmbeddingMode::Replay => {
                let dir = config
                    .fixture_dir
                    .as_ref()
                    .ok_or_else(|| SimilarityError::InvalidQuery("replay embeddings need a fixture_dir".into()))?;
                Some(CacheStore::open_read_only(dir).map_err(|e| SimilarityError::Cache(e.to_string()))?)
            }
            EmbeddingMode::Live => {
                if config.endpoint_url.is_none() || config.model.is_none() {
                    return Err(SimilarityError::InvalidQuery("live embeddings need endpoint_url and model".into()));
                }
                None
            }
            EmbeddingMode::Mock => None,
        };
        let retry = RetryPolicy { max_retries: config.max_retries, ..RetryPolicy::default() };
        Ok(Self { config, transport, cache, fixtures, retry })
    }

    fn model(&self) -> &str {
        self.config.model.as_deref().unwrap_or("mock-trigram")
    }

    fn key(&self, text: &str) -> CacheKey {
        CacheKey::for_request("embedding", self.model(), text, 0.0, self.config.dim as u32)
    }

    fn decode(&self, value: &serde_json::Value) -> Result<EmbeddingVector, SimilarityError> {
        let arr = value.as_array().ok_or_else(|| SimilarityError::ProviderUnavailable("embedding is not an array".into()))?;
        let values: Vec<f64> = arr.iter().filter_map(serde_json::Value::as_f64).collect();
        if values.len() != arr.len() {
            return Err(SimilarityError::ProviderUnavailable("embedding has non-numeric entries".into()));
        }
        if values.len() != self.config.dim {
            return Err(SimilarityError::DimMismatch { expected: self.config.dim, got: values.len() });
        }
        EmbeddingVector::new(values)
    }

    fn fetch(&self, text: &str) -> Result<serde_json::Value, SimilarityError> {
        match self.config.mode {
            EmbeddingMode::Mock => {
                let v = mock_embed(text, self.config.dim, self.config.seed)?;
                Ok(json!(v.values()))
            }
            EmbeddingMode::Replay => Err(SimilarityError::ReplayMiss(text.to_string())),
            EmbeddingMode::Live => {
                let transport =
                    self.transport.as_ref().ok_or_else(|| SimilarityError::ProviderUnavailable("no transport configured".into()))?;
                let endpoint = self.config.endpoint_url.as_deref().unwrap_or_default();
                let auth = self.config.auth_env.as_deref().and_then(|v| std::env::var(v).ok());
                let body = json!({"model": self.model(), "input": [text]});
                let timeout = Duration::from_secs_f64(self.config.request_timeout.max(0.001));
                let response = self
                    .retry
                    .run(|| transport.post_json(endpoint, auth.as_deref(), &body, timeout))
                    .map_err(|e| SimilarityError::ProviderUnavailable(e.to_string()))?;
                response
                    .pointer("/data/0/embedding")
                    .cloned()
                    .ok_or_else(|| SimilarityError::ProviderUnavailable("response lacks data[0].embedding".into()))
            }
        }
    }

    fn request_json(&self, text: &str) -> serde_json::Value {
        json!({"kind": "embedding", "model": self.model(), "input": [text]})
    }
}

impl Embedder for HttpEmbedder {
    fn identity(&self) -> String {
        match self.config.mode {
            EmbeddingMode::Mock => MockEmbedder { dim: self.config.dim, seed: self.config.seed }.identity(),
            _ => format!("http:{}(dim={})", self.model(), self.config.dim),
        }
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, SimilarityError> {
        if text.trim().is_empty() {
            return Err(SimilarityError::EmptyText);
        }
        let key = self.key(text);
        if let Some(fixtures) = &self.fixtures {
            let entry = fixtures
                .get(&key)
                .map_err(|e| SimilarityError::Cache(e.to_string()))?
                .ok_or_else(|| SimilarityError::ReplayMiss(text.to_string()))?;
            return self.decode(&entry.response);
        }
        let value = match &self.cache {
            Some(cache) => {
                cache
                    .cached_call(&key, || self.fetch(text).map(|v| (self.request_json(text), v)))
                    .map_err(|e| match e {
                        crate::providers::CachedCallError::Compute(inner) => inner,
                        crate::providers::CachedCallError::Cache(c) => SimilarityError::Cache(c.to_string()),
                    })?
                    .response
            }
            None => self.fetch(text)?,
        };
        self.decode(&value)
    }
}
