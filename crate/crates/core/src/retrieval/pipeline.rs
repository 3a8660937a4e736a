//! Method A (BM25 then cross-encoder) and Method B (bi-encoder then
//! cross-encoder) over a study set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bm25::LexicalIndex;
use super::embed::{cosine_similarity, cross_scores, embed, CrossEncoder, Embedder, EmbeddingVector};
use super::RetrievalError;
use crate::corpus::StudySet;
use crate::ids::{NodeId, ParaId};
use crate::labels::{ParagraphLabels, RelevanceType};
use crate::process::{node_query_text, ProcessError, ProcessModel, QueryVerbosity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// BM25 candidates, cross-encoder re-rank.
    #[serde(rename = "A_bm25_ce")]
    Bm25CrossEncoder,
    /// Bi-encoder candidates, cross-encoder re-rank.
    #[serde(rename = "B_bienc_ce")]
    BiEncoderCrossEncoder,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bm25CrossEncoder => "A_bm25_ce",
            Method::BiEncoderCrossEncoder => "B_bienc_ce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub para_id: ParaId,
    pub score: f64,
}

/// Ordered `(para_id, score)` list for one query node. Entries are sorted by
/// descending score, ties by ascending `para_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_node_id: NodeId,
    pub method: Method,
    pub stage: Stage,
    pub entries: Vec<RankEntry>,
}

/// Relative score gap up to which two entries count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// True when `a` and `b` differ by no more than rounding noise.
pub fn scores_tied(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Score descending; runs of tied scores by ascending id, so rounding
/// differences between equal scores never decide the order.
fn sort_entries(entries: &mut [RankEntry]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.para_id.cmp(&b.para_id)));
    let mut start = 0;
    for i in 1..=entries.len() {
        if i == entries.len() || !scores_tied(entries[i - 1].score, entries[i].score) {
            entries[start..i].sort_by(|a, b| a.para_id.cmp(&b.para_id));
            start = i;
        }
    }
}

impl Ranking {
    /// Sorts `scored` into ranking order. Duplicate ids are rejected.
    pub fn from_scores(
        query_node_id: NodeId,
        method: Method,
        stage: Stage,
        scored: Vec<(ParaId, f64)>,
    ) -> Result<Self, RetrievalError> {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::with_capacity(scored.len());
        for (para_id, score) in scored {
            if !seen.insert(para_id.clone()) {
                return Err(RetrievalError::InvalidParams(format!(
                    "duplicate paragraph {para_id} in ranking"
                )));
            }
            entries.push(RankEntry { para_id, score });
        }
        sort_entries(&mut entries);
        Ok(Ranking {
            query_node_id,
            method,
            stage,
            entries,
        })
    }

    pub fn para_ids(&self) -> impl Iterator<Item = &ParaId> {
        self.entries.iter().map(|e| &e.para_id)
    }

    pub fn is_sorted(&self) -> bool {
        let mut sorted = self.entries.clone();
        sort_entries(&mut sorted);
        sorted == self.entries && self.entries.windows(2).all(|w| w[0].para_id != w[1].para_id)
    }
}

/// How many re-ranked entries count as predicted relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FinalK {
    Count(usize),
    /// As many as the gold standard marks relevant for the query node.
    GoldCount(GoldCountTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldCountTag {
    GoldCount,
}

impl FinalK {
    pub const GOLD_COUNT: FinalK = FinalK::GoldCount(GoldCountTag::GoldCount);

    /// The numeric cut-off, given the gold relevant count for the node.
    pub fn resolve(self, gold_count: usize) -> usize {
        match self {
            FinalK::Count(k) => k,
            FinalK::GoldCount(_) => gold_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    /// Candidates passed from the first stage to the re-ranker.
    pub initial_k: usize,
    pub final_k: FinalK,
    #[serde(default)]
    pub query_verbosity: QueryVerbosity,
}

impl PipelineConfig {
    pub fn new(method: Method) -> Self {
        PipelineConfig {
            method,
            initial_k: 100,
            final_k: FinalK::GOLD_COUNT,
            query_verbosity: QueryVerbosity::DescriptionOnly,
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.initial_k == 0 {
            return Err(RetrievalError::InvalidParams("initial_k must be positive".into()));
        }
        if let FinalK::Count(k) = self.final_k {
            if k == 0 || k > self.initial_k {
                return Err(RetrievalError::InvalidParams(format!(
                    "final_k {k} must be in 1..=initial_k ({})",
                    self.initial_k
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineWarning {
    InitialKClamped { requested: usize, available: usize },
    FinalKClamped { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub initial: Ranking,
    pub reranked: Ranking,
    pub warnings: Vec<PipelineWarning>,
}

/// Semantic providers used by a run. `bi_encoder` is only consulted for
/// Method B queries.
pub struct Providers<'a> {
    pub bi_encoder: &'a dyn Embedder,
    pub cross_encoder: &'a dyn CrossEncoder,
}

/// Index and passage embeddings for one study set; immutable once built and
/// shareable across query nodes.
pub struct RetrievalContext<'s> {
    set: &'s StudySet,
    index: LexicalIndex,
    passage_embeddings: Option<Vec<EmbeddingVector>>,
}

impl<'s> RetrievalContext<'s> {
    pub fn new(set: &'s StudySet, index: LexicalIndex) -> Self {
        RetrievalContext {
            set,
            index,
            passage_embeddings: None,
        }
    }

    /// Embeds every paragraph body once, for Method B.
    pub fn with_passage_embeddings(mut self, bi: &dyn Embedder) -> Result<Self, RetrievalError> {
        let bodies: Vec<&str> = self.set.paragraphs().iter().map(|p| p.body.as_str()).collect();
        self.passage_embeddings = Some(embed(bi, &bodies)?);
        Ok(self)
    }

    pub fn index(&self) -> &LexicalIndex {
        &self.index
    }

    pub fn set(&self) -> &StudySet {
        self.set
    }

    /// First-stage scores for every paragraph, in set order.
    pub fn first_stage_scores(
        &self,
        method: Method,
        query: &str,
        bi: &dyn Embedder,
    ) -> Result<Vec<f64>, RetrievalError> {
        match method {
            Method::Bm25CrossEncoder => Ok(self.index.score_all(query)),
            Method::BiEncoderCrossEncoder => {
                let q = embed(bi, &[query])?.remove(0);
                let owned;
                let passages = match &self.passage_embeddings {
                    Some(p) => p,
                    None => {
                        let bodies: Vec<&str> = self.set.paragraphs().iter().map(|p| p.body.as_str()).collect();
                        owned = embed(bi, &bodies)?;
                        &owned
                    }
                };
                passages
                    .iter()
                    .map(|p| cosine_similarity(&q, p).map_err(RetrievalError::from))
                    .collect()
            }
        }
    }

    /// Runs the configured method for one query node.
    pub fn run(
        &self,
        model: &ProcessModel,
        node_id: &str,
        config: &PipelineConfig,
        providers: &Providers<'_>,
    ) -> Result<PipelineOutput, RetrievalError> {
        config.validate()?;
        let node = model
            .node(node_id)
            .ok_or_else(|| ProcessError::UnknownNode(NodeId::from(node_id)))?;
        let query = node_query_text(model, node_id, config.query_verbosity)?;
        let mut warnings = Vec::new();
        let available = self.set.len();
        let k = if config.initial_k > available {
            log::warn!("initial_k {} clamped to set size {available}", config.initial_k);
            warnings.push(PipelineWarning::InitialKClamped {
                requested: config.initial_k,
                available,
            });
            available
        } else {
            config.initial_k
        };

        let first = self.first_stage_scores(config.method, &query, providers.bi_encoder)?;
        let scored: Vec<(ParaId, f64)> = self
            .set
            .paragraphs()
            .iter()
            .zip(first)
            .map(|(p, s)| (p.para_id.clone(), s))
            .collect();
        let mut initial = Ranking::from_scores(node.node_id.clone(), config.method, Stage::Initial, scored)?;
        initial.entries.truncate(k);

        let bodies: Vec<&str> = initial
            .entries
            .iter()
            .map(|e| {
                self.set
                    .paragraph(&e.para_id)
                    .map(|p| p.body.as_str())
                    .ok_or_else(|| RetrievalError::UnknownParagraph(e.para_id.clone()))
            })
            .collect::<Result<_, _>>()?;
        let pairs: Vec<(&str, &str)> = bodies.iter().map(|b| (query.as_str(), *b)).collect();
        let scores = cross_scores(providers.cross_encoder, &pairs)?;
        let rescored = initial
            .entries
            .iter()
            .zip(scores)
            .map(|(e, s)| (e.para_id.clone(), s))
            .collect();
        let reranked = Ranking::from_scores(node.node_id.clone(), config.method, Stage::Reranked, rescored)?;
        Ok(PipelineOutput {
            initial,
            reranked,
            warnings,
        })
    }
}

/// The top `k` para ids of a ranking, with a warning when `k` exceeds the
/// number of entries.
pub fn binarize_top_k(ranking: &Ranking, k: usize) -> (Vec<ParaId>, Option<PipelineWarning>) {
    let available = ranking.entries.len();
    let warning = (k > available).then(|| {
        log::warn!("binarization k {k} clamped to {available} entries");
        PipelineWarning::FinalKClamped {
            requested: k,
            available,
        }
    });
    let ids = ranking.entries.iter().take(k).map(|e| e.para_id.clone()).collect();
    (ids, warning)
}

/// Turns reranked rankings into per-paragraph predictions: the top
/// `k_for(node)` paragraphs of each ranking are labeled relevant for that
/// node. Retrieval has no notion of relevance type, so selections carry
/// `informative`, the weakest relevant type. Paragraphs of `set` that no
/// ranking selects are predicted irrelevant.
pub fn rankings_to_predictions(
    set: &StudySet,
    model: &ProcessModel,
    rankings: &[Ranking],
    mut k_for: impl FnMut(&NodeId) -> usize,
) -> Result<BTreeMap<ParaId, ParagraphLabels>, RetrievalError> {
    let mut preds: BTreeMap<ParaId, ParagraphLabels> = set
        .paragraphs()
        .iter()
        .map(|p| (p.para_id.clone(), ParagraphLabels::irrelevant()))
        .collect();
    for r in rankings {
        let node = model
            .node(&r.query_node_id)
            .ok_or_else(|| ProcessError::UnknownNode(r.query_node_id.clone()))?;
        let (ids, _) = binarize_top_k(r, k_for(&r.query_node_id));
        for id in ids {
            let labels = preds
                .get_mut(&id)
                .ok_or_else(|| RetrievalError::UnknownParagraph(id.clone()))?;
            labels.set(node.level, &node.node_id, RelevanceType::Informative);
        }
    }
    Ok(preds)
}
