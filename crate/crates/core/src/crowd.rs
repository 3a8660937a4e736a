//! Two-phase crowd annotation: quality checks and aggregation.
//!
//! Phase 1 asks whether a paragraph is relevant for the process and for
//! which sub-processes. Phase 2 runs only on paragraphs the phase-1
//! aggregate found relevant and asks for the tasks and events, with a type.
//! Phase 1 carries no type, so its labels are `informative` unless a
//! phase-2 child is stronger.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::eval::{close_labels, EvalError};
use crate::ids::{NodeId, ParaId};
use crate::labels::{Level, ParagraphLabels, RelevanceType};
use crate::process::ProcessModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Phase1,
    Phase2,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase1Answer {
    pub process_relevant: bool,
    #[serde(default)]
    pub subprocess_ids: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase2Answer {
    /// Selected tasks and events with their type.
    #[serde(default)]
    pub nodes: BTreeMap<NodeId, RelevanceType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSubmission {
    pub worker_id: String,
    pub para_id: ParaId,
    pub phase: Phase,
    pub received_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase1_answer: Option<Phase1Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2_answer: Option<Phase2Answer>,
    #[serde(default)]
    pub justification: String,
    pub test_question_answers: [bool; 2],
    #[serde(default)]
    pub clicked_forbidden_option: bool,
    #[serde(default)]
    pub selected_options: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrowdError {
    #[error("no submissions for paragraph {0}")]
    NoSubmissions(ParaId),
    #[error("submission by {worker_id} for {para_id}: {message}")]
    InvalidSubmission {
        worker_id: String,
        para_id: ParaId,
        message: &'static str,
    },
    #[error("submissions for several paragraphs passed to a single aggregation")]
    MixedParagraphs,
    #[error("invalid vote threshold {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Labels(#[from] EvalError),
    #[error("malformed submission at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl WorkerSubmission {
    /// Phase answer present iff it matches the phase.
    pub fn validate(&self) -> Result<(), CrowdError> {
        let ok = match self.phase {
            Phase::Phase1 => self.phase1_answer.is_some() && self.phase2_answer.is_none(),
            Phase::Phase2 => self.phase2_answer.is_some() && self.phase1_answer.is_none(),
        };
        if ok {
            Ok(())
        } else {
            Err(CrowdError::InvalidSubmission {
                worker_id: self.worker_id.clone(),
                para_id: self.para_id.clone(),
                message: "answer does not match phase",
            })
        }
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<WorkerSubmission>, CrowdError> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sub: WorkerSubmission = serde_json::from_str(line).map_err(|e| CrowdError::Malformed {
                line: i + 1,
                message: alloc::format!("{e}"),
            })?;
            sub.validate()?;
            out.push(sub);
        }
        Ok(out)
    }
}

/// Option texts that drive the semantic-dependency check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub not_relevant_option: String,
    /// Options that are not relevance labels (the attention trap).
    pub non_label_options: BTreeSet<String>,
    /// Further option pairs that may not be selected together.
    #[serde(default)]
    pub illegal_pairs: Vec<(String, String)>,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            not_relevant_option: "Not relevant".into(),
            non_label_options: ["Do not click on this option".into()].into_iter().collect(),
            illegal_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityFlags {
    pub passed_test_questions: bool,
    pub passed_attention: bool,
    pub passed_semantic_dependency: bool,
    pub passed_all: bool,
}

pub fn check_quality(sub: &WorkerSubmission, config: &QualityConfig) -> QualityFlags {
    let opts = &sub.selected_options;
    let not_relevant = opts.contains(&config.not_relevant_option);
    let any_label = opts
        .iter()
        .any(|o| *o != config.not_relevant_option && !config.non_label_options.contains(o));
    let illegal = config
        .illegal_pairs
        .iter()
        .any(|(a, b)| opts.contains(a) && opts.contains(b));
    let passed_test_questions = sub.test_question_answers.iter().all(|&b| b);
    let passed_attention = !sub.clicked_forbidden_option;
    let passed_semantic_dependency = !(not_relevant && any_label) && !illegal;
    QualityFlags {
        passed_test_questions,
        passed_attention,
        passed_semantic_dependency,
        passed_all: passed_test_questions && passed_attention && passed_semantic_dependency,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Vote over every submission, ignoring quality checks.
    #[default]
    Unfiltered,
    /// Earliest submission that passed every check, verbatim.
    QltFilter,
    /// Union over all passing submissions.
    QltComb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum VoteRule {
    /// Relevant when at least half of the votes say so.
    Majority,
    /// Relevant when the share of relevant votes reaches `threshold`.
    Proportion { threshold: f64 },
}

impl VoteRule {
    fn relevant(self, yes: usize, total: usize) -> bool {
        match self {
            VoteRule::Majority => 2 * yes >= total,
            VoteRule::Proportion { threshold } => yes as f64 >= threshold * total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub strategy: Strategy,
    pub vote_rule: VoteRule,
    pub quality: QualityConfig,
    /// Expected passing workers per item; fewer only warns.
    pub target_workers: usize,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            strategy: Strategy::Unfiltered,
            vote_rule: VoteRule::Majority,
            quality: QualityConfig::default(),
            target_workers: 3,
        }
    }
}

impl AggregationConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        AggregationConfig {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CrowdError> {
        if let VoteRule::Proportion { threshold } = self.vote_rule {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(CrowdError::InvalidThreshold(threshold));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PhaseOutcome {
    Aggregated {
        submissions: usize,
    },
    /// Submissions exist but none passed the quality checks.
    NoQualifiedData,
    /// Phase 2 did not run: phase 1 found the paragraph irrelevant or had no
    /// qualified data, or no phase-2 submissions arrived.
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrowdWarning {
    FewWorkers {
        phase: Phase,
        passing: usize,
        target: usize,
    },
    UnknownNode {
        worker_id: String,
        node: NodeId,
    },
    /// Phase-2 submissions for a paragraph that phase 1 did not pass on.
    GatedPhase2 {
        submissions: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowdAggregate {
    pub para_id: ParaId,
    pub labels: ParagraphLabels,
    pub phase1: PhaseOutcome,
    pub phase2: PhaseOutcome,
    pub warnings: Vec<CrowdWarning>,
}

impl CrowdAggregate {
    /// True when phase 1 produced a label; false means no qualified data.
    pub fn has_data(&self) -> bool {
        !matches!(self.phase1, PhaseOutcome::NoQualifiedData)
    }
}

type Vote = BTreeMap<NodeId, RelevanceType>;

fn combine(votes: &[Vote], universe: &BTreeSet<NodeId>, strategy: Strategy, rule: VoteRule) -> Vote {
    let mut out = Vote::new();
    match strategy {
        Strategy::QltFilter => {
            if let Some(first) = votes.first() {
                out = first.clone();
            }
        }
        Strategy::QltComb => {
            for v in votes {
                for (n, t) in v {
                    let e = out.entry(n.clone()).or_default();
                    *e = (*e).max(*t);
                }
            }
        }
        Strategy::Unfiltered => {
            for n in universe {
                let relevant: Vec<RelevanceType> = votes.iter().filter_map(|v| v.get(n).copied()).collect();
                if !rule.relevant(relevant.len(), votes.len()) || relevant.is_empty() {
                    continue;
                }
                let compliance = relevant.iter().filter(|t| **t == RelevanceType::Compliance).count();
                let t = if 2 * compliance >= relevant.len() {
                    RelevanceType::Compliance
                } else {
                    RelevanceType::Informative
                };
                out.insert(n.clone(), t);
            }
        }
    }
    out.retain(|n, t| universe.contains(n) && t.is_relevant());
    out
}

/// Submissions eligible under the strategy, earliest first. Ties on the
/// timestamp fall back to worker id so the order is input-independent.
fn eligible<'a>(subs: &[&'a WorkerSubmission], config: &AggregationConfig) -> (Vec<&'a WorkerSubmission>, usize) {
    let mut picked: Vec<&WorkerSubmission> = match config.strategy {
        Strategy::Unfiltered => subs.to_vec(),
        _ => subs
            .iter()
            .copied()
            .filter(|s| check_quality(s, &config.quality).passed_all)
            .collect(),
    };
    picked.sort_by(|a, b| (a.received_at, &a.worker_id).cmp(&(b.received_at, &b.worker_id)));
    let passing = subs
        .iter()
        .filter(|s| check_quality(s, &config.quality).passed_all)
        .count();
    (picked, passing)
}

fn phase1_vote(sub: &WorkerSubmission, model: &ProcessModel, warnings: &mut Vec<CrowdWarning>) -> Vote {
    let answer = sub.phase1_answer.as_ref().expect("validated");
    let mut v = Vote::new();
    if answer.process_relevant {
        v.insert(model.root().node_id.clone(), RelevanceType::Informative);
    }
    for n in &answer.subprocess_ids {
        if model.node(n).is_some_and(|x| x.level == Level::L2) {
            v.insert(n.clone(), RelevanceType::Informative);
        } else {
            warnings.push(CrowdWarning::UnknownNode {
                worker_id: sub.worker_id.clone(),
                node: n.clone(),
            });
        }
    }
    v
}

fn phase2_vote(sub: &WorkerSubmission, model: &ProcessModel, warnings: &mut Vec<CrowdWarning>) -> Vote {
    let answer = sub.phase2_answer.as_ref().expect("validated");
    let mut v = Vote::new();
    for (n, t) in &answer.nodes {
        if model.node(n).is_some_and(|x| x.level == Level::L3) {
            if t.is_relevant() {
                v.insert(n.clone(), *t);
            }
        } else {
            warnings.push(CrowdWarning::UnknownNode {
                worker_id: sub.worker_id.clone(),
                node: n.clone(),
            });
        }
    }
    v
}

/// Aggregates every submission for one paragraph.
pub fn aggregate(
    subs: &[WorkerSubmission],
    model: &ProcessModel,
    config: &AggregationConfig,
) -> Result<CrowdAggregate, CrowdError> {
    config.validate()?;
    let para_id = match subs.first() {
        Some(s) => s.para_id.clone(),
        None => return Err(CrowdError::MixedParagraphs),
    };
    if subs.iter().any(|s| s.para_id != para_id) {
        return Err(CrowdError::MixedParagraphs);
    }
    for s in subs {
        s.validate()?;
    }
    let by_phase = |p: Phase| -> Vec<&WorkerSubmission> { subs.iter().filter(|s| s.phase == p).collect() };
    let p1 = by_phase(Phase::Phase1);
    let p2 = by_phase(Phase::Phase2);
    if p1.is_empty() {
        return Err(CrowdError::NoSubmissions(para_id));
    }
    let mut warnings = Vec::new();
    let mut labels = ParagraphLabels::irrelevant();

    let mut phase1_universe: BTreeSet<NodeId> = model.node_ids_at(Level::L2);
    phase1_universe.insert(model.root().node_id.clone());
    let (eligible1, passing1) = eligible(&p1, config);
    if passing1 < config.target_workers {
        warnings.push(CrowdWarning::FewWorkers {
            phase: Phase::Phase1,
            passing: passing1,
            target: config.target_workers,
        });
    }
    let phase1 = if eligible1.is_empty() {
        PhaseOutcome::NoQualifiedData
    } else {
        let votes: Vec<Vote> = eligible1.iter().map(|s| phase1_vote(s, model, &mut warnings)).collect();
        let combined = combine(&votes, &phase1_universe, config.strategy, config.vote_rule);
        for (n, t) in combined {
            let level = if n == model.root().node_id {
                Level::L1
            } else {
                Level::L2
            };
            labels.set(level, &n, t);
        }
        PhaseOutcome::Aggregated {
            submissions: eligible1.len(),
        }
    };

    let gate_open = labels.level1.is_relevant() || labels.any_relevant(Level::L2);
    let phase2 = if !gate_open {
        if !p2.is_empty() {
            warnings.push(CrowdWarning::GatedPhase2 { submissions: p2.len() });
        }
        PhaseOutcome::NotRun
    } else if p2.is_empty() {
        PhaseOutcome::NotRun
    } else {
        let (eligible2, passing2) = eligible(&p2, config);
        if passing2 < config.target_workers {
            warnings.push(CrowdWarning::FewWorkers {
                phase: Phase::Phase2,
                passing: passing2,
                target: config.target_workers,
            });
        }
        if eligible2.is_empty() {
            PhaseOutcome::NoQualifiedData
        } else {
            let votes: Vec<Vote> = eligible2.iter().map(|s| phase2_vote(s, model, &mut warnings)).collect();
            labels.level3 = combine(&votes, &model.node_ids_at(Level::L3), config.strategy, config.vote_rule);
            PhaseOutcome::Aggregated {
                submissions: eligible2.len(),
            }
        }
    };

    let mut labels = close_labels(&labels, model)?;
    // phase-1 labels carry no type; take the strongest child type upward
    let mut l2_strongest: BTreeMap<NodeId, RelevanceType> = BTreeMap::new();
    for (n, t) in &labels.level3 {
        if let Some(p) = model.parent(n) {
            let e = l2_strongest.entry(p.node_id.clone()).or_default();
            *e = (*e).max(*t);
        }
    }
    for (n, t) in l2_strongest {
        let e = labels.level2.entry(n).or_default();
        *e = (*e).max(t);
    }
    if let Some(t) = labels.level2.values().copied().max() {
        labels.level1 = labels.level1.max(t);
    }
    labels.compact();
    Ok(CrowdAggregate {
        para_id,
        labels,
        phase1,
        phase2,
        warnings,
    })
}

/// Groups submissions by paragraph and aggregates each.
pub fn aggregate_all(
    subs: &[WorkerSubmission],
    model: &ProcessModel,
    config: &AggregationConfig,
) -> Result<BTreeMap<ParaId, CrowdAggregate>, CrowdError> {
    let mut grouped: BTreeMap<&ParaId, Vec<WorkerSubmission>> = BTreeMap::new();
    for s in subs {
        grouped.entry(&s.para_id).or_default().push(s.clone());
    }
    grouped
        .into_iter()
        .map(|(id, group)| Ok((id.clone(), aggregate(&group, model, config)?)))
        .collect()
}
