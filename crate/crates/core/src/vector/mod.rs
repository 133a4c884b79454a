//! Embedding layer: canonical JSON rendering, embedders and a brute-force
//! cosine index.

pub mod canonical;
mod embed;
mod index;

use thiserror::Error;

pub use embed::{cosine, fnv1a64, EmbeddingVector, Embedder, LocalEmbedder, RemoteEmbedder, LOCAL_DIM};
pub use index::{rank_order, VectorIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("embedder mismatch: index built with `{index}`, query from `{query}`")]
    EmbedderMismatch { index: String, query: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("malformed index or embedding: {0}")]
    Format(String),
    #[error("index I/O: {0}")]
    Io(String),
}
