//! Access to reference and generator models, plus the response cache.

mod cache;
mod client;
pub mod parse;
pub mod prompt;
pub mod testing;
mod transport;

pub use cache::{CacheEntry, CacheError, CacheKey, CacheStats, CacheStore, CachedCallError};
pub use client::{ConcurrencyLimit, MockResponses, ProviderClient, ProviderConfig, ProviderError, ProviderMode};
pub use parse::{parse_contrastive, ParseError, ParseWarning, ParsedPairs};
pub use transport::{HttpTransport, RetryPolicy, Transport, TransportError};
