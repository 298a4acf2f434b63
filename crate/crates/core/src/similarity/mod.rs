//! Text embeddings, cosine similarity and exact neighbor search over questions.

mod embedding;
mod index;

pub use embedding::{cosine, mock_embed, Embedder, EmbeddingConfig, EmbeddingMode, EmbeddingVector, HttpEmbedder, MockEmbedder};
pub use index::{NeighborBounds, NeighborEntry, NeighborSet, QuestionIndex};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding must be non-empty, finite and non-zero")]
    DegenerateVector,
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDim(usize),
    #[error("provider returned {got} dimensions, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no recorded embedding for {0:?}")]
    ReplayMiss(String),
    #[error("duplicate question id {0:?} in index")]
    DuplicateId(String),
    #[error("question {0:?} is not indexed")]
    UnknownQuery(String),
    #[error("invalid neighbor query: {0}")]
    InvalidQuery(String),
    #[error("embedding cache: {0}")]
    Cache(String),
}
