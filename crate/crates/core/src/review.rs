//! Expert review of machine pre-selections, kept as a replayable event log.
//!
//! Commands ([`ReviewState::plan_enqueue`], [`ReviewState::plan_decision`])
//! validate against the current state and return events; [`ReviewState::apply`]
//! is the only mutation. Replaying the same events in order reproduces the
//! same state.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::eval::{EvalError, GoldRecord, GoldStandard};
use crate::ids::{NodeId, ParaId};
use crate::judge::LlmJudgment;
use crate::labels::{Level, ParagraphLabels, RelevanceType};
use crate::process::ProcessModel;
use crate::retrieval::Ranking;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Pending,
    Confirmed,
    Rejected,
    Retyped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub run_id: String,
    pub para_id: ParaId,
    pub query_node_id: NodeId,
    pub level: Level,
    pub method: String,
    pub machine_score: Option<f64>,
    pub machine_label: Option<RelevanceType>,
    pub machine_justification: Option<String>,
    pub status: ReviewStatus,
    pub expert_label: Option<RelevanceType>,
    pub decided_at: Option<DateTime<Utc>>,
    pub reviewer: Option<String>,
}

impl ReviewItem {
    pub fn id_for(run_id: &str, para_id: &ParaId, node: &NodeId) -> String {
        format!("{run_id}:{para_id}:{node}")
    }

    fn pending(run_id: &str, para_id: ParaId, node: NodeId, level: Level, method: String) -> Self {
        ReviewItem {
            item_id: Self::id_for(run_id, &para_id, &node),
            run_id: run_id.into(),
            para_id,
            query_node_id: node,
            level,
            method,
            machine_score: None,
            machine_label: None,
            machine_justification: None,
            status: ReviewStatus::Pending,
            expert_label: None,
            decided_at: None,
            reviewer: None,
        }
    }
}

/// Machine output a review queue is filled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutput {
    Rankings {
        run_id: String,
        rankings: Vec<Ranking>,
    },
    Judgments {
        run_id: String,
        method: String,
        judgments: Vec<LlmJudgment>,
    },
}

impl RunOutput {
    pub fn run_id(&self) -> &str {
        match self {
            RunOutput::Rankings { run_id, .. } | RunOutput::Judgments { run_id, .. } => run_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum EnqueuePolicy {
    /// The first `k` entries of every ranking.
    TopK { k: usize },
    /// Every node a judgment labels relevant.
    LabelFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Confirm,
    Reject,
    Retype,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    /// Required for `retype`, and for `confirm` when the item carries no
    /// machine label.
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub relevance_type: Option<RelevanceType>,
    pub reviewer: String,
    pub idempotency_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldDelta {
    pub para_id: ParaId,
    pub before: ParagraphLabels,
    pub after: ParagraphLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResult {
    pub item: ReviewItem,
    pub gold_delta: GoldDelta,
    /// Ancestors left relevant without a relevant descendant.
    pub flagged_for_review: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("item {} already decided", .0.item_id)]
    Conflict(Box<ReviewItem>),
    #[error("idempotency key {0} reused for a different request")]
    KeyReuse(String),
    #[error("{0}")]
    InvalidDecision(&'static str),
    #[error("policy does not apply to this run output")]
    PolicyMismatch,
    #[error("node {0} not in the process model")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Gold(#[from] EvalError),
}

/// One entry of the append-only review log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReviewEvent {
    Enqueued {
        items: Vec<ReviewItem>,
    },
    Decided {
        item_id: String,
        decision: Decision,
        decided_at: DateTime<Utc>,
    },
    GoldImported {
        records: Vec<GoldRecord>,
    },
}

/// A decision remembered under its idempotency key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedResult {
    pub idempotency_key: String,
    pub item_id: String,
    pub decision: Decision,
    pub result: DecisionResult,
}

/// Serializable form of a [`ReviewState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSnapshot {
    pub model: ProcessModel,
    pub use_case_id: String,
    pub items: Vec<ReviewItem>,
    pub gold: Vec<GoldRecord>,
    pub flagged: Vec<(ParaId, NodeId)>,
    pub decisions: Vec<KeyedResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueFilter {
    #[serde(default)]
    pub status: Option<ReviewStatus>,
    #[serde(default)]
    pub level: Option<Level>,
    #[serde(default)]
    pub method: Option<String>,
}

/// Outcome of planning a decision.
#[derive(Debug, Clone, PartialEq)]
pub enum Planned {
    /// A new event to append and apply.
    Apply(ReviewEvent),
    /// The same request was already applied; its original result.
    Replay(Box<DecisionResult>),
}

/// Review items and gold labels for one process model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewState {
    model: ProcessModel,
    items: BTreeMap<String, ReviewItem>,
    gold: GoldStandard,
    flagged: BTreeSet<(ParaId, NodeId)>,
    keys: BTreeMap<String, KeyedResult>,
}

impl ReviewState {
    pub fn new(model: ProcessModel, use_case_id: impl Into<String>) -> Self {
        ReviewState {
            model,
            items: BTreeMap::new(),
            gold: GoldStandard::empty(use_case_id),
            flagged: BTreeSet::new(),
            keys: BTreeMap::new(),
        }
    }

    pub fn snapshot(&self) -> ReviewSnapshot {
        ReviewSnapshot {
            model: self.model.clone(),
            use_case_id: self.gold.use_case_id.clone(),
            items: self.items.values().cloned().collect(),
            gold: self.gold.to_records(),
            flagged: self.flagged.iter().cloned().collect(),
            decisions: self.keys.values().cloned().collect(),
        }
    }

    pub fn from_snapshot(snap: ReviewSnapshot) -> Result<Self, ReviewError> {
        let gold = GoldStandard::from_records(snap.use_case_id, snap.gold, &snap.model, None)?;
        Ok(ReviewState {
            model: snap.model,
            items: snap.items.into_iter().map(|i| (i.item_id.clone(), i)).collect(),
            gold,
            flagged: snap.flagged.into_iter().collect(),
            keys: snap
                .decisions
                .into_iter()
                .map(|k| (k.idempotency_key.clone(), k))
                .collect(),
        })
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn gold(&self) -> &GoldStandard {
        &self.gold
    }

    pub fn items(&self) -> &BTreeMap<String, ReviewItem> {
        &self.items
    }

    pub fn item(&self, id: &str) -> Option<&ReviewItem> {
        self.items.get(id)
    }

    /// (paragraph, node) pairs waiting for a manual ancestor check.
    pub fn flagged(&self) -> &BTreeSet<(ParaId, NodeId)> {
        &self.flagged
    }

    /// Items matching `filter`, highest machine score first; unscored items
    /// last, then by id.
    pub fn queue(&self, filter: &QueueFilter) -> Vec<&ReviewItem> {
        let mut out: Vec<&ReviewItem> = self
            .items
            .values()
            .filter(|i| filter.status.is_none_or(|s| i.status == s))
            .filter(|i| filter.level.is_none_or(|l| i.level == l))
            .filter(|i| filter.method.as_ref().is_none_or(|m| &i.method == m))
            .collect();
        out.sort_by(|a, b| {
            let sa = a.machine_score.unwrap_or(f64::NEG_INFINITY);
            let sb = b.machine_score.unwrap_or(f64::NEG_INFINITY);
            sb.total_cmp(&sa).then_with(|| a.item_id.cmp(&b.item_id))
        });
        out
    }

    fn level_of(&self, node: &NodeId) -> Result<Level, ReviewError> {
        self.model
            .node(node)
            .map(|n| n.level)
            .ok_or_else(|| ReviewError::UnknownNode(node.clone()))
    }

    /// Items a run would add; pairs already queued for the run are skipped.
    pub fn plan_enqueue(&self, output: &RunOutput, policy: EnqueuePolicy) -> Result<Vec<ReviewItem>, ReviewError> {
        let mut fresh: BTreeMap<String, ReviewItem> = BTreeMap::new();
        match (output, policy) {
            (RunOutput::Rankings { run_id, rankings }, EnqueuePolicy::TopK { k }) => {
                for r in rankings {
                    let level = self.level_of(&r.query_node_id)?;
                    for e in r.entries.iter().take(k) {
                        let mut item = ReviewItem::pending(
                            run_id,
                            e.para_id.clone(),
                            r.query_node_id.clone(),
                            level,
                            r.method.as_str().into(),
                        );
                        item.machine_score = Some(e.score);
                        fresh.entry(item.item_id.clone()).or_insert(item);
                    }
                }
            }
            (
                RunOutput::Judgments {
                    run_id,
                    method,
                    judgments,
                },
                EnqueuePolicy::LabelFilter,
            ) => {
                let root = self.model.root().node_id.clone();
                for j in judgments {
                    let l = &j.labels;
                    let mut relevant: Vec<(NodeId, Level, RelevanceType)> = Vec::new();
                    if l.level1.is_relevant() {
                        relevant.push((root.clone(), Level::L1, l.level1));
                    }
                    for (level, map) in [(Level::L2, &l.level2), (Level::L3, &l.level3)] {
                        for (n, t) in map.iter().filter(|(_, t)| t.is_relevant()) {
                            if self.level_of(n)? != level {
                                return Err(ReviewError::UnknownNode(n.clone()));
                            }
                            relevant.push((n.clone(), level, *t));
                        }
                    }
                    for (node, level, t) in relevant {
                        let mut item = ReviewItem::pending(run_id, j.para_id.clone(), node, level, method.clone());
                        item.machine_label = Some(t);
                        item.machine_justification = Some(j.justification.clone());
                        fresh.entry(item.item_id.clone()).or_insert(item);
                    }
                }
            }
            _ => return Err(ReviewError::PolicyMismatch),
        }
        Ok(fresh
            .into_values()
            .filter(|i| !self.items.contains_key(&i.item_id))
            .collect())
    }

    /// Validates a decision. A repeated idempotency key with the same
    /// request replays the original result.
    pub fn plan_decision(
        &self,
        item_id: &str,
        decision: &Decision,
        now: DateTime<Utc>,
    ) -> Result<Planned, ReviewError> {
        if let Some(prev) = self.keys.get(&decision.idempotency_key) {
            if prev.item_id == item_id && prev.decision == *decision {
                return Ok(Planned::Replay(Box::new(prev.result.clone())));
            }
            return Err(ReviewError::KeyReuse(decision.idempotency_key.clone()));
        }
        let item = self
            .items
            .get(item_id)
            .ok_or_else(|| ReviewError::UnknownItem(item_id.into()))?;
        if item.status != ReviewStatus::Pending {
            return Err(ReviewError::Conflict(alloc::boxed::Box::new(item.clone())));
        }
        expert_label(item, decision)?;
        Ok(Planned::Apply(ReviewEvent::Decided {
            item_id: item_id.into(),
            decision: decision.clone(),
            decided_at: now,
        }))
    }

    /// Applies one event. Events produced by the planners always apply.
    pub fn apply(&mut self, event: &ReviewEvent) -> Result<Option<DecisionResult>, ReviewError> {
        match event {
            ReviewEvent::Enqueued { items } => {
                for i in items {
                    self.items.entry(i.item_id.clone()).or_insert_with(|| i.clone());
                }
                Ok(None)
            }
            ReviewEvent::GoldImported { records } => {
                let mut records = records.clone();
                for r in &mut records {
                    fill_import_provenance(r);
                }
                let imported = GoldStandard::from_records(self.gold.use_case_id.clone(), records, &self.model, None)?;
                let mut merged: Vec<GoldRecord> = self
                    .gold
                    .to_records()
                    .into_iter()
                    .filter(|r| imported.get(&r.para_id).is_none())
                    .collect();
                merged.extend(imported.to_records());
                self.gold = GoldStandard::from_records(self.gold.use_case_id.clone(), merged, &self.model, None)?;
                Ok(None)
            }
            ReviewEvent::Decided {
                item_id,
                decision,
                decided_at,
            } => {
                if let Some(prev) = self.keys.get(&decision.idempotency_key) {
                    return Ok(Some(prev.result.clone()));
                }
                let item = self
                    .items
                    .get(item_id)
                    .ok_or_else(|| ReviewError::UnknownItem(item_id.clone()))?
                    .clone();
                if item.status != ReviewStatus::Pending {
                    return Err(ReviewError::Conflict(alloc::boxed::Box::new(item)));
                }
                let label = expert_label(&item, decision)?;
                let before = self.gold.get(&item.para_id).cloned().unwrap_or_default();
                let note = format!("decision {item_id} by {}", decision.reviewer);
                let after = self
                    .gold
                    .set_label(&item.para_id, item.level, &item.query_node_id, label, note, &self.model)?
                    .clone();
                let flagged = if decision.action == Action::Reject {
                    orphaned_ancestors(&self.model, &after, &item.query_node_id)
                } else {
                    Vec::new()
                };
                for n in &flagged {
                    self.flagged.insert((item.para_id.clone(), n.clone()));
                }
                let updated = ReviewItem {
                    status: match decision.action {
                        Action::Confirm => ReviewStatus::Confirmed,
                        Action::Reject => ReviewStatus::Rejected,
                        Action::Retype => ReviewStatus::Retyped,
                    },
                    expert_label: Some(label),
                    decided_at: Some(*decided_at),
                    reviewer: Some(decision.reviewer.clone()),
                    ..item
                };
                self.items.insert(item_id.clone(), updated.clone());
                let result = DecisionResult {
                    item: updated,
                    gold_delta: GoldDelta {
                        para_id: self.items[item_id].para_id.clone(),
                        before,
                        after,
                    },
                    flagged_for_review: flagged,
                };
                self.keys.insert(
                    decision.idempotency_key.clone(),
                    KeyedResult {
                        idempotency_key: decision.idempotency_key.clone(),
                        item_id: item_id.clone(),
                        decision: decision.clone(),
                        result: result.clone(),
                    },
                );
                Ok(Some(result))
            }
        }
    }
}

fn expert_label(item: &ReviewItem, d: &Decision) -> Result<RelevanceType, ReviewError> {
    match d.action {
        Action::Reject => Ok(RelevanceType::Irrelevant),
        Action::Retype => match d.relevance_type {
            Some(t) if t.is_relevant() => Ok(t),
            Some(_) => Err(ReviewError::InvalidDecision("retype needs a relevant type; use reject")),
            None => Err(ReviewError::InvalidDecision("retype needs a type")),
        },
        Action::Confirm => match (item.machine_label, d.relevance_type) {
            (Some(m), None) => Ok(m),
            (Some(m), Some(t)) if m == t => Ok(m),
            (Some(_), Some(_)) => Err(ReviewError::InvalidDecision(
                "confirm with a different type; use retype",
            )),
            (None, Some(t)) if t.is_relevant() => Ok(t),
            (None, Some(_)) => Err(ReviewError::InvalidDecision("confirm needs a relevant type")),
            (None, None) => Err(ReviewError::InvalidDecision(
                "item has no machine label; confirm needs a type",
            )),
        },
    }
}

/// Relevant ancestors of `node` that have no relevant descendant left.
fn orphaned_ancestors(model: &ProcessModel, labels: &ParagraphLabels, node: &NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    for a in model.ancestors(node).into_iter().rev() {
        if !labels.get(a.level, &a.node_id).is_relevant() {
            continue;
        }
        let has_relevant_child = model
            .children(&a.node_id)
            .any(|c| labels.get(c.level, &c.node_id).is_relevant());
        if !has_relevant_child {
            out.push(a.node_id.clone());
        }
    }
    out
}

fn fill_import_provenance(r: &mut GoldRecord) {
    let mut keys: Vec<String> = Vec::new();
    if r.labels.level1.is_relevant() {
        keys.push("level1".into());
    }
    for (prefix, map) in [("level2", &r.labels.level2), ("level3", &r.labels.level3)] {
        for (n, t) in map {
            if t.is_relevant() {
                keys.push(format!("{prefix}:{n}"));
            }
        }
    }
    for k in keys {
        r.provenance.entry(k).or_insert_with(|| "import".to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::tests::small_model;
    use crate::retrieval::{Method, RankEntry, Stage};
    use alloc::vec;
    use chrono::TimeZone;
    use RelevanceType::*;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn ranking(node: &str, n: usize) -> Ranking {
        Ranking {
            query_node_id: NodeId::from(node),
            method: Method::Bm25CrossEncoder,
            stage: Stage::Reranked,
            entries: (0..n)
                .map(|i| RankEntry {
                    para_id: ParaId::new(format!("p{i}")),
                    score: 1.0 - i as f64 / 100.0,
                })
                .collect(),
        }
    }

    fn decision(action: Action, t: Option<RelevanceType>, key: &str) -> Decision {
        Decision {
            action,
            relevance_type: t,
            reviewer: "ana".into(),
            idempotency_key: key.into(),
        }
    }

    fn enqueue(state: &mut ReviewState, out: &RunOutput, policy: EnqueuePolicy) -> usize {
        let items = state.plan_enqueue(out, policy).unwrap();
        let n = items.len();
        state.apply(&ReviewEvent::Enqueued { items }).unwrap();
        n
    }

    fn decide(state: &mut ReviewState, id: &str, d: &Decision) -> Result<DecisionResult, ReviewError> {
        match state.plan_decision(id, d, now())? {
            Planned::Replay(r) => Ok(*r),
            Planned::Apply(e) => Ok(state.apply(&e)?.unwrap()),
        }
    }

    fn judged(para: &str, l3: &[(&str, RelevanceType)]) -> LlmJudgment {
        let labels = ParagraphLabels {
            level1: Irrelevant,
            level2: BTreeMap::new(),
            level3: l3.iter().map(|(n, t)| (NodeId::from(*n), *t)).collect(),
        };
        LlmJudgment {
            para_id: ParaId::from(para),
            labels: crate::eval::close_labels(&labels, &small_model()).unwrap(),
            justification: "because".into(),
            raw_reply: String::new(),
        }
    }

    #[test]
    fn top_k_and_idempotent_enqueue() {
        let mut s = ReviewState::new(small_model(), "uc");
        let out = RunOutput::Rankings {
            run_id: "r1".into(),
            rankings: vec![ranking("t1", 10)],
        };
        assert_eq!(enqueue(&mut s, &out, EnqueuePolicy::TopK { k: 3 }), 3);
        assert_eq!(enqueue(&mut s, &out, EnqueuePolicy::TopK { k: 3 }), 0);
        assert!(s.items().values().all(|i| i.status == ReviewStatus::Pending));
        let q = s.queue(&QueueFilter::default());
        assert_eq!(q[0].para_id.as_str(), "p0");
        assert_eq!(
            s.plan_enqueue(&out, EnqueuePolicy::LabelFilter),
            Err(ReviewError::PolicyMismatch)
        );
    }

    #[test]
    fn label_filter_only_relevant() {
        let mut s = ReviewState::new(small_model(), "uc");
        let out = RunOutput::Judgments {
            run_id: "j1".into(),
            method: "llm_v3".into(),
            judgments: vec![judged("a", &[("t1", Compliance)]), judged("b", &[])],
        };
        assert_eq!(enqueue(&mut s, &out, EnqueuePolicy::LabelFilter), 3);
        assert!(s.items().values().all(|i| i.para_id.as_str() == "a"));
        let item = s.item("j1:a:t1").unwrap();
        assert_eq!(item.machine_label, Some(Compliance));
        assert_eq!(item.machine_justification.as_deref(), Some("because"));
    }

    #[test]
    fn confirm_reject_retype() {
        let mut s = ReviewState::new(small_model(), "uc");
        let out = RunOutput::Judgments {
            run_id: "j".into(),
            method: "llm".into(),
            judgments: vec![judged("a", &[("t1", Compliance), ("t2", Compliance)])],
        };
        enqueue(&mut s, &out, EnqueuePolicy::LabelFilter);
        let r = decide(&mut s, "j:a:t1", &decision(Action::Confirm, None, "k1")).unwrap();
        assert_eq!(r.item.status, ReviewStatus::Confirmed);
        assert_eq!(s.gold().get("a").unwrap().get(Level::L3, "t1"), Compliance);
        assert_eq!(s.gold().get("a").unwrap().get(Level::L2, "s1"), Compliance);

        let r = decide(&mut s, "j:a:t2", &decision(Action::Retype, Some(Informative), "k2")).unwrap();
        assert_eq!(r.item.status, ReviewStatus::Retyped);
        assert_eq!(s.gold().get("a").unwrap().get(Level::L3, "t2"), Informative);

        // rejecting t1 leaves t2 under s1, nothing to flag
        let err = decide(&mut s, "j:a:t1", &decision(Action::Reject, None, "k3")).unwrap_err();
        assert!(matches!(err, ReviewError::Conflict(ref i) if i.status == ReviewStatus::Confirmed));
    }

    #[test]
    fn reject_flags_orphaned_ancestors() {
        let mut s = ReviewState::new(small_model(), "uc");
        let out = RunOutput::Judgments {
            run_id: "j".into(),
            method: "llm".into(),
            judgments: vec![judged("a", &[("e1", Informative)])],
        };
        enqueue(&mut s, &out, EnqueuePolicy::LabelFilter);
        decide(&mut s, "j:a:e1", &decision(Action::Confirm, None, "k1")).unwrap();
        let out2 = RunOutput::Judgments {
            run_id: "j2".into(),
            method: "llm".into(),
            judgments: vec![judged("a", &[("e1", Informative)])],
        };
        enqueue(&mut s, &out2, EnqueuePolicy::LabelFilter);
        let r = decide(&mut s, "j2:a:e1", &decision(Action::Reject, None, "k2")).unwrap();
        let g = s.gold().get("a").unwrap();
        assert_eq!(g.get(Level::L3, "e1"), Irrelevant);
        assert_eq!(g.get(Level::L2, "s2"), Informative);
        assert_eq!(g.level1, Informative);
        assert_eq!(r.flagged_for_review, vec![NodeId::from("s2")]);
        assert!(s.flagged().contains(&(ParaId::from("a"), NodeId::from("s2"))));
    }

    #[test]
    fn idempotency_keys() {
        let mut s = ReviewState::new(small_model(), "uc");
        let out = RunOutput::Rankings {
            run_id: "r".into(),
            rankings: vec![ranking("t1", 2)],
        };
        enqueue(&mut s, &out, EnqueuePolicy::TopK { k: 2 });
        let id = ReviewItem::id_for("r", &ParaId::from("p0"), &NodeId::from("t1"));
        assert_eq!(
            decide(&mut s, &id, &decision(Action::Confirm, None, "k")),
            Err(ReviewError::InvalidDecision(
                "item has no machine label; confirm needs a type"
            ))
        );
        let d = decision(Action::Confirm, Some(Compliance), "k");
        let first = decide(&mut s, &id, &d).unwrap();
        let again = decide(&mut s, &id, &d).unwrap();
        assert_eq!(first, again);
        let other = decision(Action::Reject, None, "k");
        assert_eq!(decide(&mut s, &id, &other), Err(ReviewError::KeyReuse("k".into())));
    }

    #[test]
    fn gold_import_marks_provenance() {
        let mut s = ReviewState::new(small_model(), "uc");
        let rec = GoldRecord {
            para_id: ParaId::from("a"),
            labels: judged("a", &[("t1", Compliance)]).labels,
            provenance: BTreeMap::new(),
        };
        s.apply(&ReviewEvent::GoldImported { records: vec![rec] }).unwrap();
        let p = s.gold().provenance("a").unwrap();
        assert_eq!(p["level1"], "import");
        assert_eq!(p["level3:t1"], "import");
        let bad = GoldRecord {
            para_id: ParaId::from("b"),
            labels: ParagraphLabels {
                level3: [(NodeId::from("t1"), Compliance)].into_iter().collect(),
                ..ParagraphLabels::default()
            },
            provenance: BTreeMap::new(),
        };
        assert!(s.apply(&ReviewEvent::GoldImported { records: vec![bad] }).is_err());
    }

    #[test]
    fn replaying_events_reproduces_state() {
        let mut s = ReviewState::new(small_model(), "uc");
        let mut log = Vec::new();
        let out = RunOutput::Judgments {
            run_id: "j".into(),
            method: "llm".into(),
            judgments: vec![judged("a", &[("t1", Compliance)])],
        };
        let items = s.plan_enqueue(&out, EnqueuePolicy::LabelFilter).unwrap();
        log.push(ReviewEvent::Enqueued { items });
        s.apply(&log[0]).unwrap();
        if let Planned::Apply(e) = s
            .plan_decision("j:a:t1", &decision(Action::Confirm, None, "k"), now())
            .unwrap()
        {
            s.apply(&e).unwrap();
            log.push(e);
        }
        let mut replayed = ReviewState::new(small_model(), "uc");
        for e in &log {
            let line = serde_json::to_string(e).unwrap();
            replayed.apply(&serde_json::from_str(&line).unwrap()).unwrap();
        }
        assert_eq!(replayed, s);
        let snap = serde_json::to_string(&s.snapshot()).unwrap();
        let restored = ReviewState::from_snapshot(serde_json::from_str(&snap).unwrap()).unwrap();
        assert_eq!(restored, s);
    }
}
