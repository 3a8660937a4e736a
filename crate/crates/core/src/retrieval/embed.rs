//! Embedding vectors, provider traits, and the offline fallback providers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bm25::{idf, LexicalIndex};
use super::RetrievalError;
use crate::text::Tokenizer;

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} results for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider tags differ: {0} vs {1}")]
    TagMismatch(String, String),
    #[error("degenerate embedding")]
    Degenerate,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid provider reply: {0}")]
    InvalidReply(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_tag: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_tag: impl Into<String>) -> Self {
        EmbeddingVector {
            values,
            provider_tag: provider_tag.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

/// Cosine similarity `dot(a,b) / (|a| |b|)`, clamped to `[-1, 1]` against
/// rounding.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, ProviderError> {
    if a.provider_tag != b.provider_tag {
        return Err(ProviderError::TagMismatch(
            a.provider_tag.clone(),
            b.provider_tag.clone(),
        ));
    }
    if a.dim() != b.dim() {
        return Err(ProviderError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(ProviderError::Degenerate);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Encodes texts independently (bi-encoder).
pub trait Embedder {
    fn provider_tag(&self) -> &str;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

/// Scores query/passage pairs jointly. Raw scores may fall outside `[0, 1]`;
/// callers go through [`cross_score`] / [`cross_scores`], which clamp.
pub trait CrossEncoder {
    fn provider_tag(&self) -> &str;
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError>;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn provider_tag(&self) -> &str {
        (**self).provider_tag()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

impl<T: CrossEncoder + ?Sized> CrossEncoder for &T {
    fn provider_tag(&self) -> &str {
        (**self).provider_tag()
    }
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        (**self).score_pairs(pairs)
    }
}

/// Embeds a batch and checks the batch contract: one vector per text, one
/// dimension, one provider tag.
pub fn embed<E: Embedder + ?Sized>(provider: &E, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::EmptyInput);
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::CountMismatch {
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    let dim = vectors[0].dim();
    for v in &vectors {
        if v.dim() != dim {
            return Err(ProviderError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        if v.provider_tag != vectors[0].provider_tag {
            return Err(ProviderError::TagMismatch(
                vectors[0].provider_tag.clone(),
                v.provider_tag.clone(),
            ));
        }
    }
    Ok(vectors)
}

fn clamp_score(raw: f64, tag: &str) -> Result<f64, ProviderError> {
    if raw.is_nan() {
        return Err(ProviderError::InvalidReply(String::from("NaN cross score")));
    }
    if !(0.0..=1.0).contains(&raw) {
        log::warn!("{tag}: cross score {raw} outside [0,1], clamped");
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// Cross-encoder scores for a batch of pairs, clamped to `[0, 1]`.
pub fn cross_scores<C: CrossEncoder + ?Sized>(provider: &C, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
    if pairs.iter().any(|(q, p)| q.trim().is_empty() || p.trim().is_empty()) {
        return Err(ProviderError::EmptyInput);
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let raw = provider.score_pairs(pairs)?;
    if raw.len() != pairs.len() {
        return Err(ProviderError::CountMismatch {
            expected: pairs.len(),
            got: raw.len(),
        });
    }
    raw.into_iter()
        .map(|s| clamp_score(s, provider.provider_tag()))
        .collect()
}

pub fn cross_score<C: CrossEncoder + ?Sized>(provider: &C, query: &str, passage: &str) -> Result<f64, ProviderError> {
    Ok(cross_scores(provider, &[(query, passage)])?[0])
}

/// Feature-hashed tf-idf embedding with signed hashing and L2
/// normalization.
///
/// Each token adds `sign * tf * idf` to bucket `fnv1a(token) % dim`; the
/// sign comes from bit 32 of the same hash. idf is the BM25 idf of the
/// study-set index; unseen tokens get the idf of a zero document frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedTfIdfEmbedder {
    dim: usize,
    tokenizer: Tokenizer,
    idf: BTreeMap<String, f64>,
    unseen_idf: f64,
    tag: String,
}

impl HashedTfIdfEmbedder {
    pub fn from_index(index: &LexicalIndex, dim: usize) -> Result<Self, RetrievalError> {
        if dim == 0 {
            return Err(RetrievalError::InvalidParams("embedding dim must be positive".into()));
        }
        let idf_map = index
            .vocabulary()
            .map(|(t, df)| (String::from(t), idf(index.num_docs(), df)))
            .collect();
        Ok(HashedTfIdfEmbedder {
            dim,
            tokenizer: index.tokenizer().clone(),
            idf: idf_map,
            unseen_idf: idf(index.num_docs(), 0),
            tag: alloc::format!("fallback-hashed-tfidf-{dim}"),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let mut values = vec![0.0; self.dim];
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in self.tokenizer.tokenize(text) {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in &tf {
            let h = fnv1a(t.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
            let w = self.idf.get(t).copied().unwrap_or(self.unseen_idf);
            values[bucket] += sign * f64::from(*n) * w;
        }
        let norm = libm::sqrt(values.iter().map(|v| v * v).sum());
        if norm == 0.0 {
            return Err(ProviderError::Degenerate);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector::new(values, self.tag.clone()))
    }
}

impl Embedder for HashedTfIdfEmbedder {
    fn provider_tag(&self) -> &str {
        &self.tag
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Cross-encoder stand-in: `(1 + cosine(embed(q), embed(p))) / 2`.
#[derive(Debug, Clone)]
pub struct FallbackCrossEncoder<E> {
    embedder: E,
    tag: String,
}

impl<E: Embedder> FallbackCrossEncoder<E> {
    pub fn new(embedder: E) -> Self {
        let tag = alloc::format!("fallback-cross({})", embedder.provider_tag());
        FallbackCrossEncoder { embedder, tag }
    }
}

impl<E: Embedder> CrossEncoder for FallbackCrossEncoder<E> {
    fn provider_tag(&self) -> &str {
        &self.tag
    }

    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        let mut queries: BTreeMap<&str, EmbeddingVector> = BTreeMap::new();
        let mut out = Vec::with_capacity(pairs.len());
        for &(q, p) in pairs {
            if !queries.contains_key(q) {
                let v = embed(&self.embedder, &[q])?.remove(0);
                queries.insert(q, v);
            }
            let pv = embed(&self.embedder, &[p])?.remove(0);
            let cos = cosine_similarity(&queries[q], &pv)?;
            out.push((1.0 + cos) / 2.0);
        }
        Ok(out)
    }
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
