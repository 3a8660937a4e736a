//! Okapi BM25 over an in-memory inverted index.
//!
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(q, d) = sum over query tokens t of
//!     idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen))
//!
//! The smoothed idf is always positive, so scores are never negative.
//! Repeated query tokens contribute once per occurrence.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::corpus::StudySet;
use crate::ids::ParaId;
use crate::text::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Length normalization, in `[0, 1]`.
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RetrievalError> {
        let p = Bm25Params { k1, b };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<(), RetrievalError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(RetrievalError::InvalidParams(format!(
                "k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::InvalidParams(format!(
                "b must be in [0,1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    params: Bm25Params,
    tokenizer: Tokenizer,
    docs: Vec<ParaId>,
    doc_pos: BTreeMap<ParaId, u32>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// term -> (doc position, term frequency), ascending by position.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl LexicalIndex {
    pub fn build(set: &StudySet, params: Bm25Params) -> Result<Self, RetrievalError> {
        Self::build_with(set, params, Tokenizer::default())
    }

    pub fn build_with(set: &StudySet, params: Bm25Params, tokenizer: Tokenizer) -> Result<Self, RetrievalError> {
        let texts: Vec<(ParaId, &str)> = set
            .paragraphs()
            .iter()
            .map(|p| (p.para_id.clone(), p.body.as_str()))
            .collect();
        Self::from_texts(texts, params, tokenizer)
    }

    /// Indexes arbitrary `(id, text)` pairs in the given order.
    pub fn from_texts<'a>(
        texts: impl IntoIterator<Item = (ParaId, &'a str)>,
        params: Bm25Params,
        tokenizer: Tokenizer,
    ) -> Result<Self, RetrievalError> {
        params.check()?;
        let mut docs = Vec::new();
        let mut doc_pos = BTreeMap::new();
        let mut doc_lengths = Vec::new();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (id, text) in texts {
            let pos = u32::try_from(docs.len()).expect("fewer than 2^32 paragraphs");
            if doc_pos.insert(id.clone(), pos).is_some() {
                return Err(RetrievalError::InvalidParams(format!("duplicate paragraph {id}")));
            }
            docs.push(id);
            let tokens = tokenizer.tokenize(text);
            doc_lengths.push(u32::try_from(tokens.len()).expect("token count fits u32"));
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((pos, n));
            }
        }
        if docs.is_empty() {
            return Err(RetrievalError::EmptySet);
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / docs.len() as f64;
        Ok(LexicalIndex {
            params,
            tokenizer,
            docs,
            doc_pos,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn para_ids(&self) -> &[ParaId] {
        &self.docs
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, para_id: &str) -> Option<usize> {
        self.doc_pos
            .get(para_id)
            .map(|&p| self.doc_lengths[p as usize] as usize)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_frequency(&self, term: &str, para_id: &str) -> usize {
        let (Some(list), Some(&pos)) = (self.postings.get(term), self.doc_pos.get(para_id)) else {
            return 0;
        };
        list.binary_search_by_key(&pos, |&(p, _)| p)
            .map_or(0, |i| list[i].1 as usize)
    }

    /// Vocabulary with document frequencies.
    pub fn vocabulary(&self) -> impl Iterator<Item = (&str, usize)> {
        self.postings.iter().map(|(t, l)| (t.as_str(), l.len()))
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.docs.len(), self.document_frequency(term))
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = if self.avg_doc_length > 0.0 {
            1.0 - b + b * f64::from(doc_len) / self.avg_doc_length
        } else {
            1.0
        };
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Scores every indexed paragraph, in index order.
    ///
    /// Per-term contributions are summed in ascending order, so paragraphs
    /// with the same contributions get bit-identical scores.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let mut parts: Vec<Vec<f64>> = vec![Vec::new(); self.docs.len()];
        for t in self.tokenizer.tokenize(query) {
            let Some(list) = self.postings.get(&t) else {
                continue;
            };
            let w = idf(self.docs.len(), list.len());
            for &(pos, tf) in list {
                parts[pos as usize].push(w * self.term_weight(tf, self.doc_lengths[pos as usize]));
            }
        }
        parts.into_iter().map(ordered_sum).collect()
    }
}

fn ordered_sum(mut parts: Vec<f64>) -> f64 {
    parts.sort_by(f64::total_cmp);
    parts.into_iter().fold(0.0, |acc, x| acc + x)
}

pub(crate) fn idf(n: usize, df: usize) -> f64 {
    let (n, df) = (n as f64, df as f64);
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

/// BM25 score of one paragraph for `query`.
pub fn bm25_score(index: &LexicalIndex, query: &str, para_id: &str) -> Result<f64, RetrievalError> {
    let &pos = index
        .doc_pos
        .get(para_id)
        .ok_or_else(|| RetrievalError::UnknownParagraph(ParaId::from(para_id)))?;
    let doc_len = index.doc_lengths[pos as usize];
    let mut parts = Vec::new();
    for t in index.tokenizer.tokenize(query) {
        let Some(list) = index.postings.get(&t) else {
            continue;
        };
        if let Ok(i) = list.binary_search_by_key(&pos, |&(p, _)| p) {
            parts.push(idf(index.docs.len(), list.len()) * index.term_weight(list[i].1, doc_len));
        }
    }
    Ok(ordered_sum(parts))
}
