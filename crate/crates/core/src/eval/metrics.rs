//! Confusion counts and the metrics derived from them.
//!
//! Standard definitions: TP = gold-relevant predicted relevant, FP =
//! gold-irrelevant predicted relevant, TN = gold-irrelevant predicted
//! irrelevant, FN = gold-relevant predicted irrelevant. Informative and
//! compliance both count as relevant.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::gold::GoldStandard;
use super::EvalError;
use crate::corpus::Group;
use crate::ids::{NodeId, ParaId};
use crate::labels::{Level, ParagraphLabels};
use crate::process::ProcessModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, gold_relevant: bool, predicted_relevant: bool) {
        match (gold_relevant, predicted_relevant) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

impl core::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// Exact rational kept alongside its float value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    /// `None` when the denominator is zero.
    pub fn new(num: u64, den: u64) -> Option<Ratio> {
        (den > 0).then_some(Ratio { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Half-up rounding to two decimals, computed on the integers.
    pub fn rounded(&self) -> f64 {
        round_half_up(self.num, self.den)
    }
}

impl Serialize for RatioView {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Ratio", 4)?;
        st.serialize_field("num", &self.0.num)?;
        st.serialize_field("den", &self.0.den)?;
        st.serialize_field("value", &self.0.value())?;
        st.serialize_field("rounded", &self.0.rounded())?;
        st.end()
    }
}

/// Report form of a ratio: exact parts, float value, display rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatioView(pub Ratio);

impl<'de> Deserialize<'de> for RatioView {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            num: u64,
            den: u64,
        }
        let r = Raw::deserialize(d)?;
        Ratio::new(r.num, r.den)
            .map(RatioView)
            .ok_or_else(|| serde::de::Error::custom("zero denominator"))
    }
}

/// `num/den` rounded half-up to two decimals, exactly.
pub fn round_half_up(num: u64, den: u64) -> f64 {
    let hundredths = (200 * u128::from(num) + u128::from(den)) / (2 * u128::from(den));
    hundredths as f64 / 100.0
}

/// How level-2/3 evaluation units are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// (paragraph, node) pairs for paragraphs gold-relevant at level 1 plus
    /// paragraphs predicted relevant at the evaluated level.
    #[default]
    Restricted,
    /// (paragraph, node) pairs over every paragraph.
    AllParagraphs,
}

fn check_coverage(preds: &BTreeMap<ParaId, ParagraphLabels>, gold: &GoldStandard) -> Result<(), EvalError> {
    let missing: Vec<ParaId> = gold
        .labels()
        .keys()
        .filter(|id| !preds.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    let extra: Vec<ParaId> = preds.keys().filter(|id| gold.get(id).is_none()).cloned().collect();
    if !extra.is_empty() {
        return Err(EvalError::UnexpectedPredictions(extra));
    }
    Ok(())
}

/// Confusion counts at `level`. Level 1 counts paragraphs; levels 2 and 3
/// count (paragraph, node) pairs chosen by `scope`.
pub fn confusion(
    preds: &BTreeMap<ParaId, ParagraphLabels>,
    gold: &GoldStandard,
    level: Level,
    scope: PairScope,
    model: &ProcessModel,
) -> Result<ConfusionCounts, EvalError> {
    check_coverage(preds, gold)?;
    let mut c = ConfusionCounts::default();
    if level == Level::L1 {
        for (id, g) in gold.labels() {
            c.record(g.level1.is_relevant(), preds[id].level1.is_relevant());
        }
        return Ok(c);
    }
    let nodes: Vec<NodeId> = model.nodes_at(level).map(|n| n.node_id.clone()).collect();
    let known: BTreeSet<&NodeId> = nodes.iter().collect();
    for (id, g) in gold.labels() {
        let p = &preds[id];
        let map = match level {
            Level::L2 => &p.level2,
            _ => &p.level3,
        };
        if let Some(unknown) = map.keys().find(|n| !known.contains(n)) {
            return Err(EvalError::UnknownNode(unknown.clone()));
        }
        let in_scope = match scope {
            PairScope::AllParagraphs => true,
            PairScope::Restricted => g.level1.is_relevant() || p.any_relevant(level),
        };
        if !in_scope {
            continue;
        }
        for n in &nodes {
            c.record(g.get(level, n).is_relevant(), p.get(level, n).is_relevant());
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: Level,
    pub counts: ConfusionCounts,
    pub accuracy: Option<RatioView>,
    pub precision: Option<RatioView>,
    pub recall: Option<RatioView>,
}

/// Accuracy, precision, recall; `None` where the denominator is zero.
pub fn metrics_from_counts(level: Level, counts: ConfusionCounts) -> LevelMetrics {
    LevelMetrics {
        level,
        counts,
        accuracy: Ratio::new(counts.tp + counts.tn, counts.total()).map(RatioView),
        precision: Ratio::new(counts.tp, counts.tp + counts.fp).map(RatioView),
        recall: Ratio::new(counts.tp, counts.tp + counts.fn_).map(RatioView),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: Group,
    pub counts: ConfusionCounts,
    pub accuracy: Option<RatioView>,
}

/// Level-1 accuracy within each group; `None` for empty groups.
pub fn group_accuracy(
    preds: &BTreeMap<ParaId, ParagraphLabels>,
    gold: &GoldStandard,
    groups: &BTreeMap<ParaId, Group>,
) -> Result<Vec<GroupAccuracy>, EvalError> {
    check_coverage(preds, gold)?;
    let mut per: BTreeMap<Group, ConfusionCounts> =
        Group::ALL.iter().map(|g| (*g, ConfusionCounts::default())).collect();
    for (id, g) in gold.labels() {
        let group = groups.get(id).ok_or_else(|| EvalError::MissingGroup(id.clone()))?;
        per.get_mut(group)
            .expect("all groups present")
            .record(g.level1.is_relevant(), preds[id].level1.is_relevant());
    }
    Ok(per
        .into_iter()
        .map(|(group, counts)| GroupAccuracy {
            group,
            counts,
            accuracy: Ratio::new(counts.tp + counts.tn, counts.total()).map(RatioView),
        })
        .collect())
}

/// Fraction of gold level-1-relevant paragraphs whose predicted level-1
/// type equals the gold type. Predicted-irrelevant paragraphs count as
/// mismatches. `None` when nothing is gold-relevant.
pub fn type_accuracy(
    preds: &BTreeMap<ParaId, ParagraphLabels>,
    gold: &GoldStandard,
) -> Result<Option<Ratio>, EvalError> {
    check_coverage(preds, gold)?;
    let mut matched = 0u64;
    let mut total = 0u64;
    for (id, g) in gold.labels() {
        if !g.level1.is_relevant() {
            continue;
        }
        total += 1;
        if preds[id].level1 == g.level1 {
            matched += 1;
        }
    }
    Ok(Ratio::new(matched, total))
}

/// Paragraphs that are level-1 relevant in gold but not business-relevant
/// (level 0) by their group. Empty on a consistent dataset.
pub fn level0_violations(gold: &GoldStandard, groups: &BTreeMap<ParaId, Group>) -> Vec<ParaId> {
    gold.labels()
        .iter()
        .filter(|(id, l)| l.level1.is_relevant() && !groups.get(*id).is_some_and(|g| g.is_business_relevant()))
        .map(|(id, _)| id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub use_case_id: alloc::string::String,
    /// Levels 1–3 under the restricted pair scope.
    pub levels: Vec<LevelMetrics>,
    /// Levels 2–3 with every (paragraph, node) pair evaluated.
    pub levels_all_pairs: Vec<LevelMetrics>,
    pub groups: Vec<GroupAccuracy>,
    pub type_accuracy: Option<RatioView>,
}

/// Full report for one set of predictions. `groups` may be empty, in which
/// case group accuracies are omitted.
pub fn evaluate(
    preds: &BTreeMap<ParaId, ParagraphLabels>,
    gold: &GoldStandard,
    groups: &BTreeMap<ParaId, Group>,
    model: &ProcessModel,
) -> Result<MetricsReport, EvalError> {
    let mut levels = Vec::new();
    for level in Level::ALL {
        let c = confusion(preds, gold, level, PairScope::Restricted, model)?;
        levels.push(metrics_from_counts(level, c));
    }
    let mut levels_all_pairs = Vec::new();
    for level in [Level::L2, Level::L3] {
        let c = confusion(preds, gold, level, PairScope::AllParagraphs, model)?;
        levels_all_pairs.push(metrics_from_counts(level, c));
    }
    let groups = if groups.is_empty() {
        Vec::new()
    } else {
        group_accuracy(preds, gold, groups)?
    };
    Ok(MetricsReport {
        use_case_id: gold.use_case_id.clone(),
        levels,
        levels_all_pairs,
        groups,
        type_accuracy: type_accuracy(preds, gold)?.map(RatioView),
    })
}
