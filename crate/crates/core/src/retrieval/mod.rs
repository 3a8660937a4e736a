//! Two-stage retrieval: a first stage (BM25 or bi-encoder cosine) selects
//! candidates that a cross-encoder then re-ranks.
//!
//! Semantic models sit behind the [`Embedder`] and [`CrossEncoder`] traits.
//! [`HashedTfIdfEmbedder`] and [`FallbackCrossEncoder`] are deterministic
//! offline stand-ins; remote implementations live in the companion crate.

mod bm25;
mod embed;
mod pipeline;

pub use bm25::{bm25_score, Bm25Params, LexicalIndex};
pub use embed::{
    cosine_similarity, cross_score, cross_scores, embed, CrossEncoder, Embedder, EmbeddingVector, FallbackCrossEncoder,
    HashedTfIdfEmbedder, ProviderError, DEFAULT_EMBEDDING_DIM,
};
pub use pipeline::{
    binarize_top_k, rankings_to_predictions, scores_tied, FinalK, GoldCountTag, Method, PipelineConfig, PipelineOutput,
    PipelineWarning, Providers, RankEntry, Ranking, RetrievalContext, Stage, TIE_TOLERANCE,
};

use alloc::string::String;

use crate::ids::ParaId;
use crate::process::ProcessError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("study set is empty")]
    EmptySet,
    #[error("unknown paragraph {0}")]
    UnknownParagraph(ParaId),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}
