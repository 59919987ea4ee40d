//! Semantic memory: deterministic text embeddings, an exact-cosine top-k
//! bank over the training units, mean aggregation, and persistence.

mod bank;
mod provider;

pub use bank::{
    aggregate, retrieval_stats, Aggregated, MemoryBank, RetrievalStats, TopK,
};
pub use provider::{EmbeddingProvider, HashedBowProvider};
