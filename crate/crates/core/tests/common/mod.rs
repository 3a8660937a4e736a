#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use regrel_core::corpus::{Group, Paragraph, StudySet};
use regrel_core::process::{BusinessContext, NodeKind, ProcessModel, ProcessNode};
use regrel_core::{DocId, Level, NodeId, ParaId, ParagraphLabels, RelevanceType};

/// A valid model with `l3_per_l2[i]` tasks under sub-process `i`.
pub fn model(l3_per_l2: &[usize]) -> ProcessModel {
    let node = |id: String, level, parent: Option<&str>, kind| ProcessNode {
        name: id.clone(),
        description: format!("Description of {id}."),
        node_id: NodeId::new(id),
        level,
        parent_id: parent.map(NodeId::from),
        kind,
    };
    let mut nodes = vec![node("p".into(), Level::L1, None, NodeKind::Process)];
    for (i, &n) in l3_per_l2.iter().enumerate() {
        let s = format!("s{i}");
        nodes.push(node(s.clone(), Level::L2, Some("p"), NodeKind::Subprocess));
        for j in 0..n {
            let kind = if j % 4 == 3 {
                NodeKind::ThrowingEvent
            } else {
                NodeKind::Task
            };
            nodes.push(node(format!("t{i}_{j}"), Level::L3, Some(&s), kind));
        }
    }
    ProcessModel {
        model_id: "m".into(),
        context: BusinessContext {
            business_id: "b".into(),
            location: "Germany".into(),
            domain: "insurance".into(),
            size: "large".into(),
        },
        nodes,
        bpmn_xml: None,
        incomplete: false,
    }
}

pub fn shapes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..4, 1..4)
}

pub fn rtype() -> impl Strategy<Value = RelevanceType> {
    prop_oneof![
        Just(RelevanceType::Irrelevant),
        Just(RelevanceType::Informative),
        Just(RelevanceType::Compliance),
    ]
}

/// Arbitrary, possibly unclosed, labels over every node of `m`.
pub fn labels_for(m: &ProcessModel) -> impl Strategy<Value = ParagraphLabels> {
    let l2: Vec<NodeId> = m.node_ids_at(Level::L2).into_iter().collect();
    let l3: Vec<NodeId> = m.node_ids_at(Level::L3).into_iter().collect();
    (
        rtype(),
        prop::collection::vec(rtype(), l2.len()),
        prop::collection::vec(rtype(), l3.len()),
    )
        .prop_map(move |(l1, t2, t3)| ParagraphLabels {
            level1: l1,
            level2: l2.iter().cloned().zip(t2).collect(),
            level3: l3.iter().cloned().zip(t3).collect(),
        })
}

pub fn model_and_labels() -> impl Strategy<Value = (ProcessModel, ParagraphLabels)> {
    shapes().prop_flat_map(|s| {
        let m = model(&s);
        let l = labels_for(&m);
        (Just(m), l)
    })
}

pub fn paragraph(id: &str, body: &str, group: Option<Group>) -> Paragraph {
    Paragraph {
        para_id: ParaId::from(id),
        doc_id: DocId::from("d"),
        section_title: "Section".into(),
        subsection: None,
        body: body.into(),
        group,
        gold_type_hint: None,
    }
}

pub fn set_of(bodies: &[String]) -> StudySet {
    let paragraphs = bodies
        .iter()
        .enumerate()
        .map(|(i, b)| paragraph(&format!("p{i:03}"), b, Some(Group::C)))
        .collect();
    StudySet::new("t", paragraphs).unwrap()
}

/// Raw token counts of a whitespace-joined lowercase ascii text.
pub fn counts(text: &str) -> BTreeMap<String, usize> {
    let mut c = BTreeMap::new();
    for t in text.split_whitespace() {
        *c.entry(t.to_string()).or_default() += 1;
    }
    c
}

/// Okapi BM25 recomputed from raw token counts.
pub fn brute_force_bm25(docs: &[String], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let bags: Vec<_> = docs.iter().map(|d| counts(d)).collect();
    let lens: Vec<f64> = bags.iter().map(|c| c.values().sum::<usize>() as f64).collect();
    let n = docs.len() as f64;
    let avg = lens.iter().sum::<f64>() / n;
    bags.iter()
        .zip(&lens)
        .map(|(bag, &len)| {
            let mut parts: Vec<f64> = query
                .split_whitespace()
                .map(|t| {
                    let tf = *bag.get(t).unwrap_or(&0) as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = bags.iter().filter(|c| c.contains_key(t)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    let norm = if avg > 0.0 { 1.0 - b + b * len / avg } else { 1.0 };
                    idf * tf * (k1 + 1.0) / (tf + k1 * norm)
                })
                .filter(|&x| x != 0.0)
                .collect();
            // equal multisets of term contributions must tie exactly
            parts.sort_by(f64::total_cmp);
            parts.into_iter().fold(0.0, |acc, x| acc + x)
        })
        .collect()
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Signed feature-hashed tf-idf vector, L2-normalized, with BM25 idf taken
/// from `docs`.
pub fn hashed_tfidf(text: &str, docs: &[String], dim: usize) -> Vec<f64> {
    let n = docs.len() as f64;
    let bags: Vec<_> = docs.iter().map(|d| counts(d)).collect();
    let mut v = vec![0.0; dim];
    for (t, tf) in counts(text) {
        let df = bags.iter().filter(|c| c.contains_key(&t)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let h = fnv1a(t.as_bytes());
        let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
        v[(h % dim as u64) as usize] += sign * tf as f64 * idf;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Indices by score descending; scores within 1e-12 relative of their
/// neighbour form a tie group ordered by index.
pub fn tie_aware_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        let joins = groups.last().and_then(|g| g.last()).is_some_and(|&prev| {
            let (a, b) = (scores[prev], scores[i]);
            (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
        });
        if joins {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
        .into_iter()
        .flat_map(|mut g| {
            g.sort();
            g
        })
        .collect()
}
