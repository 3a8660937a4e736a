use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::closure::{close_labels, first_violation};
use super::EvalError;
use crate::corpus::Group;
use crate::ids::{NodeId, ParaId};
use crate::labels::{Level, ParagraphLabels, RelevanceType};
use crate::process::ProcessModel;

/// One line of `gold.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub para_id: ParaId,
    #[serde(flatten)]
    pub labels: ParagraphLabels,
    /// Annotator note per label key: `level1`, `level2:<node>`,
    /// `level3:<node>`.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub para_id: ParaId,
    #[serde(flatten)]
    pub labels: ParagraphLabels,
    #[serde(default)]
    pub method: String,
    #[serde(default)]
    pub config_digest: String,
}

/// Expert labels for one use case. Every paragraph's labels satisfy
/// propagation closure; when groups are known, group A paragraphs are
/// level-1 relevant and group B/C paragraphs are not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoldStandard {
    pub use_case_id: String,
    labels: BTreeMap<ParaId, ParagraphLabels>,
    provenance: BTreeMap<ParaId, BTreeMap<String, String>>,
}

pub(crate) fn label_key(level: Level, node: &NodeId) -> String {
    match level {
        Level::L1 => "level1".into(),
        Level::L2 => alloc::format!("level2:{node}"),
        Level::L3 => alloc::format!("level3:{node}"),
    }
}

impl GoldStandard {
    pub fn empty(use_case_id: impl Into<String>) -> Self {
        GoldStandard {
            use_case_id: use_case_id.into(),
            labels: BTreeMap::new(),
            provenance: BTreeMap::new(),
        }
    }

    /// Builds a gold standard, rejecting closure violations and, when
    /// `groups` is given, group inconsistencies.
    pub fn from_records(
        use_case_id: impl Into<String>,
        records: impl IntoIterator<Item = GoldRecord>,
        model: &ProcessModel,
        groups: Option<&BTreeMap<ParaId, Group>>,
    ) -> Result<Self, EvalError> {
        let mut gold = GoldStandard::empty(use_case_id);
        for rec in records {
            if gold.labels.contains_key(&rec.para_id) {
                return Err(EvalError::DuplicateRecord(rec.para_id));
            }
            if let Some(node) = first_violation(&rec.labels, model)? {
                return Err(EvalError::ClosureViolation {
                    para_id: rec.para_id,
                    node,
                });
            }
            if let Some(groups) = groups {
                let group = groups
                    .get(&rec.para_id)
                    .ok_or_else(|| EvalError::MissingGroup(rec.para_id.clone()))?;
                let expect_relevant = *group == Group::A;
                if rec.labels.level1.is_relevant() != expect_relevant {
                    return Err(EvalError::GroupInconsistent {
                        para_id: rec.para_id,
                        group: group.to_string(),
                        level1: rec.labels.level1.to_string(),
                    });
                }
            }
            let mut labels = rec.labels;
            labels.compact();
            gold.provenance.insert(rec.para_id.clone(), rec.provenance);
            gold.labels.insert(rec.para_id, labels);
        }
        Ok(gold)
    }

    /// Parses `gold.jsonl` text.
    pub fn parse_jsonl(text: &str) -> Result<Vec<GoldRecord>, EvalError> {
        parse_lines(text)
    }

    pub fn labels(&self) -> &BTreeMap<ParaId, ParagraphLabels> {
        &self.labels
    }

    pub fn get(&self, para_id: &str) -> Option<&ParagraphLabels> {
        self.labels.get(para_id)
    }

    pub fn provenance(&self, para_id: &str) -> Option<&BTreeMap<String, String>> {
        self.provenance.get(para_id)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of paragraphs gold-relevant for `node` at `level`.
    pub fn relevant_count(&self, level: Level, node: &str) -> usize {
        self.labels
            .values()
            .filter(|l| l.get(level, node).is_relevant())
            .count()
    }

    /// Sets one label and re-closes the paragraph's labels upwards. Labels
    /// of ancestors are never removed here. Returns the closed labels.
    pub fn set_label(
        &mut self,
        para_id: &ParaId,
        level: Level,
        node: &NodeId,
        value: RelevanceType,
        note: impl Into<String>,
        model: &ProcessModel,
    ) -> Result<&ParagraphLabels, EvalError> {
        let mut labels = self.labels.get(para_id).cloned().unwrap_or_default();
        labels.set(level, node, value);
        let before = labels.clone();
        let mut closed = close_labels(&labels, model)?;
        closed.compact();
        let notes = self.provenance.entry(para_id.clone()).or_default();
        let note = note.into();
        notes.insert(label_key(level, node), note.clone());
        // record lifted ancestors under the same note
        if closed.level1 != before.level1 {
            notes.insert("level1".into(), note.clone());
        }
        for (n, t) in &closed.level2 {
            if before.get(Level::L2, n) != *t {
                notes.insert(label_key(Level::L2, n), note.clone());
            }
        }
        self.labels.insert(para_id.clone(), closed);
        Ok(&self.labels[para_id])
    }

    pub fn to_records(&self) -> Vec<GoldRecord> {
        self.labels
            .iter()
            .map(|(id, l)| GoldRecord {
                para_id: id.clone(),
                labels: l.clone(),
                provenance: self.provenance.get(id).cloned().unwrap_or_default(),
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.to_records() {
            out.push_str(&serde_json::to_string(&r).expect("gold record serializes"));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn parse_lines<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

impl PredictionRecord {
    pub fn parse_jsonl(text: &str) -> Result<Vec<PredictionRecord>, EvalError> {
        parse_lines(text)
    }

    pub fn into_map(records: Vec<PredictionRecord>) -> Result<BTreeMap<ParaId, ParagraphLabels>, EvalError> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert(r.para_id.clone(), r.labels).is_some() {
                return Err(EvalError::DuplicateRecord(r.para_id));
            }
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::tests::small_model;
    use alloc::vec;
    use RelevanceType::*;

    fn rec(id: &str, l1: RelevanceType, l2: &[(&str, RelevanceType)], l3: &[(&str, RelevanceType)]) -> GoldRecord {
        GoldRecord {
            para_id: ParaId::from(id),
            labels: ParagraphLabels {
                level1: l1,
                level2: l2.iter().map(|(n, t)| (NodeId::from(*n), *t)).collect(),
                level3: l3.iter().map(|(n, t)| (NodeId::from(*n), *t)).collect(),
            },
            provenance: BTreeMap::new(),
        }
    }

    #[test]
    fn gold_jsonl_shape() {
        let line = r#"{"para_id":"p1","level1":"compliance","level2":{"s1":"compliance"},"level3":{"t1":"compliance"},"provenance":{"level1":"expert A"}}"#;
        let recs = GoldStandard::parse_jsonl(line).unwrap();
        assert_eq!(recs[0], {
            let mut r = rec("p1", Compliance, &[("s1", Compliance)], &[("t1", Compliance)]);
            r.provenance.insert("level1".into(), "expert A".into());
            r
        });
        let g = GoldStandard::from_records("uc", recs, &small_model(), None).unwrap();
        assert_eq!(g.to_jsonl().trim(), line);
    }

    #[test]
    fn rejects_closure_violation() {
        let r = GoldStandard::from_records(
            "uc",
            vec![rec("p1", Irrelevant, &[], &[("t1", Compliance)])],
            &small_model(),
            None,
        );
        assert!(matches!(r, Err(EvalError::ClosureViolation { .. })));
    }

    #[test]
    fn rejects_group_inconsistency() {
        let m = small_model();
        let groups: BTreeMap<ParaId, Group> = [(ParaId::from("a"), Group::A), (ParaId::from("b"), Group::B)]
            .into_iter()
            .collect();
        let bad_a = GoldStandard::from_records("uc", vec![rec("a", Irrelevant, &[], &[])], &m, Some(&groups));
        assert!(matches!(bad_a, Err(EvalError::GroupInconsistent { .. })));
        let bad_b = GoldStandard::from_records("uc", vec![rec("b", Informative, &[], &[])], &m, Some(&groups));
        assert!(matches!(bad_b, Err(EvalError::GroupInconsistent { .. })));
        let ok = GoldStandard::from_records(
            "uc",
            vec![rec("a", Informative, &[], &[]), rec("b", Irrelevant, &[], &[])],
            &m,
            Some(&groups),
        )
        .unwrap();
        assert_eq!(ok.relevant_count(Level::L1, "p"), 1);
    }

    #[test]
    fn set_label_closes_upwards_and_records_provenance() {
        let m = small_model();
        let mut g = GoldStandard::empty("uc");
        let id = ParaId::from("p1");
        g.set_label(&id, Level::L3, &NodeId::from("t1"), Compliance, "decision:1", &m)
            .unwrap();
        let l = g.get("p1").unwrap();
        assert_eq!(l.level1, Compliance);
        assert_eq!(l.get(Level::L2, "s1"), Compliance);
        let prov = g.provenance("p1").unwrap();
        assert_eq!(prov["level3:t1"], "decision:1");
        assert_eq!(prov["level2:s1"], "decision:1");
        assert_eq!(prov["level1"], "decision:1");
        // rejecting the task leaves ancestors in place
        g.set_label(&id, Level::L3, &NodeId::from("t1"), Irrelevant, "decision:2", &m)
            .unwrap();
        let l = g.get("p1").unwrap();
        assert_eq!(l.get(Level::L3, "t1"), Irrelevant);
        assert_eq!(l.level1, Compliance);
    }
}
