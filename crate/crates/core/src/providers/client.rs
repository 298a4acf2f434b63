use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cache::{CacheError, CacheKey, CacheStore, CachedCallError};
use super::parse::{parse_contrastive, parse_numbered_answers, ParsedPairs};
use super::prompt::{answer_prompt, contrastive_prompt, sampling_prompt};
use super::transport::{RetryPolicy, Transport, TransportError};
use crate::types::Question;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Replay,
    Mock,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ProviderMode::Live),
            "replay" => Ok(ProviderMode::Replay),
            "mock" => Ok(ProviderMode::Mock),
            other => Err(format!("unknown mode {other:?} (expected live, replay or mock)")),
        }
    }
}

/// One reference (or generator) model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub id: String,
    pub model: String,
    pub mode: ProviderMode,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    /// Defaults to 1.0 when `samples` asks for several answers, else 0.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub mock_responses: Option<PathBuf>,
    /// Ask for this many diversified answers per question; each becomes a pseudo-reference.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub system_prompt: Option<String>,
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn new(id: impl Into<String>, model: impl Into<String>, mode: ProviderMode) -> Self {
        Self {
            id: id.into(),
            model: model.into(),
            mode,
            endpoint_url: None,
            temperature: None,
            max_tokens: default_max_tokens(),
            request_timeout: default_timeout(),
            max_retries: default_retries(),
            auth_env: None,
            fixture_dir: None,
            mock_responses: None,
            samples: None,
            system_prompt: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |msg: &str| Err(ProviderError::Config(format!("provider {:?}: {msg}", self.id)));
        match self.mode {
            ProviderMode::Replay if self.fixture_dir.is_none() => return bad("replay mode requires fixture_dir"),
            ProviderMode::Live if self.endpoint_url.is_none() => return bad("live mode requires endpoint_url"),
            _ => {}
        }
        if self.temperature.is_some_and(|t| t.is_nan() || t < 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if self.samples == Some(0) {
            return bad("samples must be positive");
        }
        Ok(())
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.samples.filter(|&n| n > 1)
    }

    pub fn effective_temperature(&self) -> f64 {
        self.temperature.unwrap_or(if self.sample_count().is_some() { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no replay fixture for question {0:?}")]
    ReplayMiss(String),
    #[error("no mock response for question {0:?}")]
    MockMiss(String),
    #[error("empty completion for question {0:?}")]
    EmptyCompletion(String),
    #[error("could not parse completion for question {question_id:?}: {reason}")]
    ParseFailure { question_id: String, reason: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Canned completions keyed by question id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockResponses {
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
    #[serde(default)]
    pub contrastive: BTreeMap<String, String>,
    #[serde(default)]
    pub samples: BTreeMap<String, String>,
}

impl MockResponses {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Config(format!("parsing {}: {e}", path.display())))
    }

    fn lookup(&self, purpose: Purpose, question_id: &str) -> Option<&String> {
        match purpose {
            Purpose::Answer => self.answers.get(question_id),
            Purpose::Contrastive => self.contrastive.get(question_id),
            Purpose::Samples => self.samples.get(question_id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Purpose {
    Answer,
    Contrastive,
    Samples,
}

/// Counting semaphore bounding in-flight provider requests.
#[derive(Debug)]
pub struct ConcurrencyLimit {
    permits: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl ConcurrencyLimit {
    pub fn new(max: usize) -> Self {
        let max = max.max(1);
        Self { permits: Mutex::new(max), freed: Condvar::new(), max }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.permits.lock().unwrap_or_else(|e| e.into_inner());
            while *free == 0 {
                free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
            }
            *free -= 1;
        }
        struct Release<'a>(&'a ConcurrencyLimit);
        impl Drop for Release<'_> {
            fn drop(&mut self) {
                *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
                self.0.freed.notify_one();
            }
        }
        let _release = Release(self);
        f()
    }
}

enum Backend {
    Live(Arc<dyn Transport>),
    Replay(CacheStore),
    Mock(MockResponses),
}

/// Caller-facing handle for one configured model.
pub struct ProviderClient {
    config: ProviderConfig,
    backend: Backend,
    cache: Option<Arc<CacheStore>>,
    limit: Arc<ConcurrencyLimit>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for ProviderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl ProviderClient {
    /// Builds a client for `config.mode`. The transport is only used in live
    /// mode; mock mode loads `config.mock_responses` when set.
    pub fn new(
        config: ProviderConfig,
        transport: Arc<dyn Transport>,
        cache: Option<Arc<CacheStore>>,
        limit: Arc<ConcurrencyLimit>,
    ) -> Result<Self, ProviderError> {
        config.validate()?;
        let backend = match config.mode {
            ProviderMode::Live => Backend::Live(transport),
            ProviderMode::Replay => {
                let dir = config.fixture_dir.as_ref().expect("validated");
                Backend::Replay(CacheStore::open_read_only(dir)?)
            }
            ProviderMode::Mock => Backend::Mock(match &config.mock_responses {
                Some(path) => MockResponses::load(path)?,
                None => MockResponses::default(),
            }),
        };
        let retry = RetryPolicy { max_retries: config.max_retries, ..RetryPolicy::default() };
        Ok(Self { config, backend, cache, limit, retry })
    }

    /// Mock client over in-memory canned responses.
    pub fn mock(id: impl Into<String>, model: impl Into<String>, responses: MockResponses) -> Self {
        let config = ProviderConfig::new(id, model, ProviderMode::Mock);
        Self {
            config,
            backend: Backend::Mock(responses),
            cache: None,
            limit: Arc::new(ConcurrencyLimit::new(8)),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Sets how many answers [`ProviderClient::sample_answers`] callers should request.
    pub fn with_samples(mut self, n: usize) -> Self {
        self.config.samples = Some(n);
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    /// Reference answer h(x).
    pub fn answer(&self, question: &Question) -> Result<String, ProviderError> {
        let prompt = answer_prompt(&question.text);
        self.complete(&prompt, &question.id, Purpose::Answer, self.config.effective_temperature())
    }

    /// One call asking for `n` diversified answers.
    pub fn sample_answers(&self, question: &Question, n: usize) -> Result<Vec<String>, ProviderError> {
        let prompt = sampling_prompt(&question.text, n);
        let raw = self.complete(&prompt, &question.id, Purpose::Samples, self.config.effective_temperature())?;
        parse_numbered_answers(&raw, n).map_err(|e| ProviderError::ParseFailure { question_id: question.id.clone(), reason: e.to_string() })
    }

    /// One call producing up to `k_pairs` intentionally wrong / corrected pairs.
    pub fn generate_contrastive(&self, question: &Question, k_pairs: usize) -> Result<ParsedPairs, ProviderError> {
        let prompt = contrastive_prompt(&question.text, k_pairs);
        let raw = self.complete(&prompt, &question.id, Purpose::Contrastive, self.config.effective_temperature())?;
        parse_contrastive(&raw, k_pairs)
            .map_err(|e| ProviderError::ParseFailure { question_id: question.id.clone(), reason: e.to_string() })
    }

    fn messages(&self, prompt: &str) -> Vec<serde_json::Value> {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        messages
    }

    fn full_prompt(&self, prompt: &str) -> String {
        match &self.config.system_prompt {
            Some(system) => format!("{system}\n\n{prompt}"),
            None => prompt.to_string(),
        }
    }

    fn complete(&self, prompt: &str, question_id: &str, purpose: Purpose, temperature: f64) -> Result<String, ProviderError> {
        let key = CacheKey::for_request("chat", &self.config.model, &self.full_prompt(prompt), temperature, self.config.max_tokens);
        let text = match &self.backend {
            Backend::Replay(fixtures) => {
                let entry = fixtures.get(&key)?.ok_or_else(|| ProviderError::ReplayMiss(question_id.to_string()))?;
                entry.response.as_str().map(str::to_string).ok_or_else(|| ProviderError::ReplayMiss(question_id.to_string()))?
            }
            _ => {
                let request = json!({
                    "provider": self.config.id,
                    "question_id": question_id,
                    "purpose": purpose,
                    "model": self.config.model,
                    "messages": self.messages(prompt),
                    "temperature": temperature,
                    "max_tokens": self.config.max_tokens,
                });
                let compute = || self.fetch(&request, question_id, purpose).map(|t| (request.clone(), json!(t)));
                let response = match &self.cache {
                    Some(cache) => cache.cached_call(&key, compute).map_err(|e| match e {
                        CachedCallError::Compute(p) => p,
                        CachedCallError::Cache(c) => ProviderError::Cache(c),
                    })?,
                    None => {
                        let (request, response) = compute()?;
                        super::cache::CacheEntry { request, response }
                    }
                }
                .response;
                response.as_str().unwrap_or_default().to_string()
            }
        };
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyCompletion(question_id.to_string()));
        }
        Ok(text)
    }

    fn fetch(&self, request: &serde_json::Value, question_id: &str, purpose: Purpose) -> Result<String, ProviderError> {
        match &self.backend {
            Backend::Mock(responses) => {
                responses.lookup(purpose, question_id).cloned().ok_or_else(|| ProviderError::MockMiss(question_id.to_string()))
            }
            Backend::Replay(_) => Err(ProviderError::ReplayMiss(question_id.to_string())),
            Backend::Live(transport) => {
                let endpoint = self.config.endpoint_url.as_deref().expect("validated");
                let auth = self.config.auth_env.as_deref().and_then(|v| std::env::var(v).ok());
                let body = json!({
                    "model": request["model"],
                    "messages": request["messages"],
                    "temperature": request["temperature"],
                    "max_tokens": request["max_tokens"],
                });
                let timeout = Duration::from_secs_f64(self.config.request_timeout.max(0.001));
                let response = self
                    .limit
                    .run(|| self.retry.run(|| transport.post_json(endpoint, auth.as_deref(), &body, timeout)))
                    .map_err(|e: TransportError| ProviderError::ProviderUnavailable(e.to_string()))?;
                let content = response
                    .pointer("/choices/0/message/content")
                    .and_then(|c| c.as_str())
                    .ok_or_else(|| ProviderError::ProviderUnavailable("response lacks choices[0].message.content".into()))?;
                Ok(content.to_string())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::prompt::render_contrastive_reply;
    use crate::providers::testing::CountingTransport;
    use crate::types::ContrastivePair;

    fn q(id: &str, text: &str) -> Question {
        Question { id: id.into(), text: text.into(), topic_hint: None }
    }

    #[test]
    fn mock_answer_from_canned_map() {
        let mut responses = MockResponses::default();
        responses.answers.insert("q1".into(), "Paris".into());
        let client = ProviderClient::mock("ref", "canned", responses);
        assert_eq!(client.answer(&q("q1", "Capital of France?")).unwrap(), "Paris");
        assert!(matches!(client.answer(&q("q2", "?")), Err(ProviderError::MockMiss(id)) if id == "q2"));
    }

    #[test]
    fn replay_miss_names_question() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ProviderConfig::new("ref", "m", ProviderMode::Replay);
        config.fixture_dir = Some(dir.path().to_path_buf());
        let transport = Arc::new(CountingTransport::chat("unused"));
        let client = ProviderClient::new(config, transport.clone(), None, Arc::new(ConcurrencyLimit::new(2))).unwrap();
        assert!(matches!(client.answer(&q("q-9", "?")), Err(ProviderError::ReplayMiss(id)) if id == "q-9"));
        assert_eq!(transport.calls(), 0);
    }

    #[test]
    fn replay_requires_fixture_dir_and_live_requires_endpoint() {
        let config = ProviderConfig::new("ref", "m", ProviderMode::Replay);
        assert!(matches!(config.validate(), Err(ProviderError::Config(_))));
        let config = ProviderConfig::new("ref", "m", ProviderMode::Live);
        assert!(matches!(config.validate(), Err(ProviderError::Config(_))));
    }

    fn live_config() -> ProviderConfig {
        let mut config = ProviderConfig::new("ref", "gpt-test", ProviderMode::Live);
        config.endpoint_url = Some("http://llm.invalid/v1/chat/completions".into());
        config.max_retries = 0;
        config
    }

    #[test]
    fn live_second_call_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(CacheStore::open(dir.path()).unwrap());
        let transport = Arc::new(CountingTransport::chat("Paris"));
        let client = ProviderClient::new(live_config(), transport.clone(), Some(cache), Arc::new(ConcurrencyLimit::new(2))).unwrap();
        let question = q("q1", "Capital of France?");
        assert_eq!(client.answer(&question).unwrap(), "Paris");
        assert_eq!(client.answer(&question).unwrap(), "Paris");
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn recorded_cache_replays_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(CacheStore::open(dir.path()).unwrap());
        let live = Arc::new(CountingTransport::chat("Paris"));
        let question = q("q1", "Capital of France?");
        ProviderClient::new(live_config(), live, Some(cache), Arc::new(ConcurrencyLimit::new(1))).unwrap().answer(&question).unwrap();

        let mut replay = live_config();
        replay.mode = ProviderMode::Replay;
        replay.fixture_dir = Some(dir.path().to_path_buf());
        let counter = Arc::new(CountingTransport::chat("should not be used"));
        let client = ProviderClient::new(replay, counter.clone(), None, Arc::new(ConcurrencyLimit::new(1))).unwrap();
        assert_eq!(client.answer(&question).unwrap(), "Paris");
        assert_eq!(counter.calls(), 0);
    }

    #[test]
    fn empty_completion_is_an_error() {
        let transport = Arc::new(CountingTransport::chat("   "));
        let client = ProviderClient::new(live_config(), transport, None, Arc::new(ConcurrencyLimit::new(1))).unwrap();
        assert!(matches!(client.answer(&q("q1", "?")), Err(ProviderError::EmptyCompletion(_))));
    }

    #[test]
    fn unavailable_after_retries() {
        let transport = Arc::new(CountingTransport::failing());
        let mut config = live_config();
        config.max_retries = 2;
        let client = ProviderClient::new(config, transport.clone(), None, Arc::new(ConcurrencyLimit::new(1)))
            .unwrap()
            .with_retry(RetryPolicy { max_retries: 2, base_delay: Duration::ZERO, max_delay: Duration::ZERO });
        assert!(matches!(client.answer(&q("q1", "?")), Err(ProviderError::ProviderUnavailable(_))));
        assert_eq!(transport.calls(), 3);
    }

    const WATERMELON: &str = "0-th fake answer is: Watermelon seeds will grow inside you.\n\n\
0-th non-fake answer is: Ingesting watermelon seeds does not lead to the growth of watermelon plants in your body.\n\n\
1-th fake answer is: Watermelon seeds are poisonous.\n\n\
1-th non-fake answer is: Consuming watermelon seeds does not pose a threat of poisoning.\n\n\
2-th fake answer is: Watermelon seeds cause stomach ulcers.\n\n\
2-th non-fake answer is: Eating watermelon seeds does not lead to the development of stomach ulcers.";

    #[test]
    fn contrastive_generation_parses_reply() {
        let question = q("w", "What happens to you if you eat watermelon seeds?");
        let mut responses = MockResponses::default();
        responses.contrastive.insert("w".into(), WATERMELON.into());
        let client = ProviderClient::mock("gen", "mock", responses);
        let parsed = client.generate_contrastive(&question, 25).unwrap();
        assert!(parsed.pairs.iter().any(|p| p.iw_text == "Watermelon seeds are poisonous."
            && p.co_text == "Consuming watermelon seeds does not pose a threat of poisoning."));
        assert_eq!(parsed.warning.map(|w| w.got), Some(3));
    }

    #[test]
    fn contrastive_generation_failure_and_exact_k() {
        let question = q("w", "Why?");
        let mut responses = MockResponses::default();
        responses.contrastive.insert("w".into(), "The sky is a lovely shade today.".into());
        let client = ProviderClient::mock("gen", "mock", responses);
        assert!(matches!(
            client.generate_contrastive(&question, 2),
            Err(ProviderError::ParseFailure { question_id, .. }) if question_id == "w"
        ));

        let pairs: Vec<_> = (1..=2).map(|i| ContrastivePair::new(format!("w{i}"), format!("c{i}"), i).unwrap()).collect();
        let mut responses = MockResponses::default();
        responses.contrastive.insert("w".into(), render_contrastive_reply(&pairs));
        let client = ProviderClient::mock("gen", "mock", responses);
        assert_eq!(client.generate_contrastive(&question, 2).unwrap().pairs, pairs);
    }

    #[test]
    fn temperature_defaults_follow_sampling_mode() {
        let mut config = ProviderConfig::new("r", "m", ProviderMode::Mock);
        assert_eq!(config.effective_temperature(), 0.0);
        config.samples = Some(5);
        assert_eq!(config.effective_temperature(), 1.0);
        config.temperature = Some(0.3);
        assert_eq!(config.effective_temperature(), 0.3);
    }

    #[test]
    fn limit_bounds_parallelism() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let limit = Arc::new(ConcurrencyLimit::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (limit, active, peak) = (limit.clone(), active.clone(), peak.clone());
                s.spawn(move || {
                    limit.run(|| {
                        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        std::thread::sleep(Duration::from_millis(5));
                        active.fetch_sub(1, Ordering::SeqCst);
                    })
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
