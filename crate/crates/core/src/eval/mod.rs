//! Gold standard, propagation closure, level-wise metrics and the method
//! recommender.

mod closure;
mod gold;
mod metrics;
mod recommend;

pub use closure::{close_labels, is_closed, normalize_predictions};
pub use gold::{GoldRecord, GoldStandard, PredictionRecord};
pub use metrics::{
    confusion, evaluate, group_accuracy, level0_violations, metrics_from_counts, round_half_up, type_accuracy,
    ConfusionCounts, GroupAccuracy, LevelMetrics, MetricsReport, PairScope, Ratio, RatioView,
};
pub use recommend::{
    canonical_profiles, recommend_methods, Dynamics, Impact, MethodCombination, Recommendation, RegulatoryInput,
    ScenarioProfile, UnknownValue, Usage,
};

use alloc::string::String;
use alloc::vec::Vec;

use crate::ids::{NodeId, ParaId};
use crate::labels::Level;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} is not a level-{expected} node")]
    WrongLevel { node: NodeId, expected: Level },
    #[error("predictions missing for paragraphs: {0:?}")]
    MissingPredictions(Vec<ParaId>),
    #[error("predictions for paragraphs outside the gold standard: {0:?}")]
    UnexpectedPredictions(Vec<ParaId>),
    #[error("paragraph {para_id}: propagation closure violated at {node}")]
    ClosureViolation { para_id: ParaId, node: NodeId },
    #[error("paragraph {para_id}: group {group} inconsistent with level-1 label {level1}")]
    GroupInconsistent {
        para_id: ParaId,
        group: String,
        level1: String,
    },
    #[error("paragraph {0} has no group")]
    MissingGroup(ParaId),
    #[error("duplicate gold record for {0}")]
    DuplicateRecord(ParaId),
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
}
