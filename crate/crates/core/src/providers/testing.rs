//! Fake transports for exercising provider code without a network.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::json;

use super::transport::{Transport, TransportError};

/// Returns a fixed body (or a fixed failure) and counts every call.
#[derive(Debug)]
pub struct CountingTransport {
    reply: Result<serde_json::Value, TransportError>,
    calls: AtomicUsize,
}

impl CountingTransport {
    /// Chat-completions style reply with `content`.
    pub fn chat(content: &str) -> Self {
        Self::with_reply(Ok(json!({"choices": [{"message": {"role": "assistant", "content": content}}]})))
    }

    /// Embeddings style reply with one vector.
    pub fn embedding(values: Vec<f64>) -> Self {
        Self::with_reply(Ok(json!({"data": [{"embedding": values}]})))
    }

    /// Every call fails with a retryable network error.
    pub fn failing() -> Self {
        Self::with_reply(Err(TransportError::Network("connection refused".into())))
    }

    pub fn with_reply(reply: Result<serde_json::Value, TransportError>) -> Self {
        Self { reply, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn post_json(
        &self,
        _url: &str,
        _bearer: Option<&str>,
        _body: &serde_json::Value,
        _timeout: Duration,
    ) -> Result<serde_json::Value, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.reply.clone()
    }
}
