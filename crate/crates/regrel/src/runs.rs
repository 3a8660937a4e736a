//! Whole-set runs of the ranking and judging methods.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use regrel_core::corpus::{Group, RegulatoryDocument, StudySet};
use regrel_core::eval::{evaluate, GoldStandard, MetricsReport};
use regrel_core::judge::{build_prompts, ChatProvider, Iteration, JudgeConfig, JudgeWarning, LlmJudgment};
use regrel_core::process::ProcessModel;
use regrel_core::retrieval::{
    rankings_to_predictions, Bm25Params, CrossEncoder, Embedder, FallbackCrossEncoder, HashedTfIdfEmbedder,
    LexicalIndex, Method, PipelineConfig, PipelineWarning, Providers, Ranking, RetrievalContext, DEFAULT_EMBEDDING_DIM,
};
use regrel_core::review::RunOutput;
use regrel_core::{DocId, Level, NodeId, ParaId, ParagraphLabels};

use crate::judging::judge_all;
use crate::remote::{RemoteConfig, RemoteProvider};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    /// Feature-hashed tf-idf embeddings built from the study set.
    #[default]
    Fallback,
    Remote,
}

pub struct RankOutput {
    /// Re-ranked ranking per node at the level, in model order.
    pub rankings: Vec<Ranking>,
    pub initial: Vec<Ranking>,
    pub warnings: Vec<PipelineWarning>,
}

/// Ranks the set for every node at `level`.
pub fn rank_level(
    set: &StudySet,
    model: &ProcessModel,
    level: Level,
    config: &PipelineConfig,
    provider: &ProviderChoice,
    remote: Option<&RemoteConfig>,
) -> Result<RankOutput> {
    let index = LexicalIndex::build(set, Bm25Params::default())?;
    let fallback = HashedTfIdfEmbedder::from_index(&index, DEFAULT_EMBEDDING_DIM)?;
    let fallback_cross = FallbackCrossEncoder::new(fallback.clone());
    let remote_provider;
    let (bi, cross): (&dyn Embedder, &dyn CrossEncoder) = match provider {
        ProviderChoice::Fallback => (&fallback, &fallback_cross),
        ProviderChoice::Remote => {
            let Some(cfg) = remote else {
                bail!(
                    "remote provider requested but {} is not set",
                    crate::remote::ENV_BASE_URL
                );
            };
            remote_provider = RemoteProvider::new(cfg.clone())?;
            (&remote_provider, &remote_provider)
        }
    };
    let mut ctx = RetrievalContext::new(set, index);
    if config.method == Method::BiEncoderCrossEncoder {
        ctx = ctx.with_passage_embeddings(bi)?;
    }
    let providers = Providers {
        bi_encoder: bi,
        cross_encoder: cross,
    };
    let mut out = RankOutput {
        rankings: Vec::new(),
        initial: Vec::new(),
        warnings: Vec::new(),
    };
    for node in model.nodes_at(level) {
        let r = ctx.run(model, &node.node_id, config, &providers)?;
        out.warnings.extend(r.warnings);
        out.initial.push(r.initial);
        out.rankings.push(r.reranked);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeParams {
    pub iteration: Iteration,
    #[serde(default)]
    pub config: JudgeConfig,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

pub struct JudgeRunOutput {
    pub judgments: Vec<LlmJudgment>,
    pub warnings: Vec<JudgeWarning>,
    /// Paragraphs whose request or reply failed, with the error text.
    pub failures: Vec<(regrel_core::ParaId, String)>,
}

/// One request per paragraph of the set.
pub fn judge_set<P: ChatProvider + Sync + ?Sized>(
    provider: &P,
    set: &StudySet,
    documents: &BTreeMap<DocId, RegulatoryDocument>,
    model: &ProcessModel,
    params: &JudgeParams,
) -> Result<JudgeRunOutput> {
    let bundles = build_prompts(model, set.paragraphs(), documents, params.iteration)?;
    let mut out = JudgeRunOutput {
        judgments: Vec::new(),
        warnings: Vec::new(),
        failures: Vec::new(),
    };
    for (para_id, outcome) in judge_all(provider, &bundles, model, &params.config, params.max_in_flight) {
        match outcome {
            Ok((j, w)) => {
                out.judgments.push(j);
                out.warnings.extend(w);
            }
            Err(e) => {
                log::error!("{para_id}: {e}");
                out.failures.push((para_id, e.to_string()));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRequest {
    pub model_id: String,
    pub set_id: String,
    pub level: Level,
    pub method: Method,
    #[serde(default = "default_initial_k")]
    pub initial_k: usize,
    #[serde(default)]
    pub provider: ProviderChoice,
}

fn default_initial_k() -> usize {
    PipelineConfig::new(Method::Bm25CrossEncoder).initial_k
}

impl RankRequest {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            initial_k: self.initial_k,
            ..PipelineConfig::new(self.method)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub model_id: String,
    pub set_id: String,
    #[serde(flatten)]
    pub params: JudgeParams,
}

pub fn execute_rank(
    run_id: &str,
    req: &RankRequest,
    set: &StudySet,
    model: &ProcessModel,
    remote: Option<&RemoteConfig>,
) -> Result<RunOutput> {
    let out = rank_level(set, model, req.level, &req.config(), &req.provider, remote)?;
    Ok(RunOutput::Rankings {
        run_id: run_id.into(),
        rankings: out.rankings,
    })
}

pub fn judge_method_name(iteration: Iteration) -> String {
    format!("llm_{iteration}")
}

/// Fails the run when any paragraph fails, so a finished run always covers
/// the whole set.
pub fn execute_judge<P: ChatProvider + Sync + ?Sized>(
    run_id: &str,
    req: &JudgeRequest,
    provider: &P,
    set: &StudySet,
    documents: &BTreeMap<DocId, RegulatoryDocument>,
    model: &ProcessModel,
) -> Result<RunOutput> {
    let out = judge_set(provider, set, documents, model, &req.params)?;
    if let Some((para_id, e)) = out.failures.first() {
        bail!(
            "{} of {} paragraphs failed, first {para_id}: {e}",
            out.failures.len(),
            set.len()
        );
    }
    Ok(RunOutput::Judgments {
        run_id: run_id.into(),
        method: judge_method_name(req.params.iteration),
        judgments: out.judgments,
    })
}

/// Binary predictions of a run output. Rankings are cut at the gold relevant
/// count of each node.
pub fn output_predictions(
    output: &RunOutput,
    set: &StudySet,
    model: &ProcessModel,
    gold: &GoldStandard,
) -> Result<BTreeMap<ParaId, ParagraphLabels>> {
    match output {
        RunOutput::Rankings { rankings, .. } => {
            let level = |n: &NodeId| model.node(n).map(|n| n.level);
            Ok(rankings_to_predictions(set, model, rankings, |n| {
                level(n).map_or(0, |l| gold.relevant_count(l, n))
            })?)
        }
        RunOutput::Judgments { judgments, .. } => Ok(judgments
            .iter()
            .map(|j| (j.para_id.clone(), j.labels.clone()))
            .collect()),
    }
}

/// Levels a run output makes predictions for.
pub fn output_levels(output: &RunOutput, model: &ProcessModel) -> Vec<Level> {
    match output {
        RunOutput::Rankings { rankings, .. } => {
            let mut levels: Vec<Level> = rankings
                .iter()
                .filter_map(|r| model.node(&r.query_node_id).map(|n| n.level))
                .collect();
            levels.sort();
            levels.dedup();
            levels
        }
        RunOutput::Judgments { .. } => Level::ALL.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub run_id: String,
    /// Paragraphs with both a prediction and a gold label.
    pub evaluated_paragraphs: usize,
    pub report: MetricsReport,
}

/// Evaluates a run against the gold labels of the paragraphs it covers.
/// For ranking runs only the ranked levels are reported.
pub fn run_report(output: &RunOutput, set: &StudySet, model: &ProcessModel, gold: &GoldStandard) -> Result<RunReport> {
    let preds = output_predictions(output, set, model, gold)?;
    let preds: BTreeMap<ParaId, ParagraphLabels> = preds
        .into_iter()
        .filter(|(id, _)| gold.get(id.as_str()).is_some())
        .collect();
    let records = gold.to_records().into_iter().filter(|r| preds.contains_key(&r.para_id));
    let gold = GoldStandard::from_records(gold.use_case_id.clone(), records, model, None)?;
    let groups: BTreeMap<ParaId, Group> = set
        .groups()
        .into_iter()
        .filter(|(id, _)| preds.contains_key(id))
        .collect();
    let mut report = evaluate(&preds, &gold, &groups, model)?;
    let levels = output_levels(output, model);
    report.levels.retain(|m| levels.contains(&m.level));
    report.levels_all_pairs.retain(|m| levels.contains(&m.level));
    if !levels.contains(&Level::L1) {
        report.groups.clear();
        report.type_accuracy = None;
    }
    Ok(RunReport {
        run_id: output.run_id().into(),
        evaluated_paragraphs: preds.len(),
        report,
    })
}
