mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use regrel_core::eval::{close_labels, is_closed, normalize_predictions, GoldRecord, GoldStandard};
use regrel_core::process::ProcessModel;
use regrel_core::{Level, ParaId, ParagraphLabels, RelevanceType};

use common::model_and_labels;

/// An irrelevant ancestor takes the strongest type among its children; a
/// relevant one keeps its own.
fn lift(own: RelevanceType, children: impl Iterator<Item = RelevanceType>) -> RelevanceType {
    if own.is_relevant() {
        own
    } else {
        children.fold(RelevanceType::Irrelevant, RelevanceType::max)
    }
}

/// Closure computed bottom-up over the tree.
fn oracle(l: &ParagraphLabels, m: &ProcessModel) -> ParagraphLabels {
    let mut out = l.clone();
    for s in m.nodes_at(Level::L2) {
        let own = l.get(Level::L2, s.node_id.as_str());
        let children = m
            .children(s.node_id.as_str())
            .map(|t| l.get(Level::L3, t.node_id.as_str()));
        out.set(Level::L2, &s.node_id, lift(own, children));
    }
    let subs: Vec<RelevanceType> = m
        .nodes_at(Level::L2)
        .map(|s| out.get(Level::L2, s.node_id.as_str()))
        .collect();
    out.level1 = lift(l.level1, subs.into_iter());
    out
}

fn compacted(mut l: ParagraphLabels) -> ParagraphLabels {
    l.compact();
    l
}

fn all_keys(m: &ProcessModel) -> Vec<(Level, String)> {
    m.nodes.iter().map(|n| (n.level, n.node_id.to_string())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn closure_matches_oracle((m, l) in model_and_labels()) {
        let closed = close_labels(&l, &m).unwrap();
        prop_assert_eq!(compacted(closed), compacted(oracle(&l, &m)));
    }

    #[test]
    fn closure_is_idempotent_and_monotone((m, l) in model_and_labels()) {
        let once = close_labels(&l, &m).unwrap();
        let twice = close_labels(&once, &m).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(is_closed(&once, &m).unwrap());
        for (level, id) in all_keys(&m) {
            prop_assert!(once.get(level, &id) >= l.get(level, &id));
        }
    }

    #[test]
    fn normalize_applies_per_paragraph((m, l) in model_and_labels()) {
        let preds: BTreeMap<ParaId, ParagraphLabels> =
            [(ParaId::from("a"), l.clone()), (ParaId::from("b"), ParagraphLabels::irrelevant())].into();
        let out = normalize_predictions(&preds, &m).unwrap();
        prop_assert_eq!(&out[&ParaId::from("a")], &close_labels(&l, &m).unwrap());
        prop_assert_eq!(normalize_predictions(&out, &m).unwrap(), out);
    }

    #[test]
    fn gold_accepts_exactly_closed_labels((m, l) in model_and_labels()) {
        let record = GoldRecord { para_id: ParaId::from("a"), labels: l.clone(), provenance: BTreeMap::new() };
        let loaded = GoldStandard::from_records("uc", [record], &m, None);
        prop_assert_eq!(loaded.is_ok(), is_closed(&l, &m).unwrap());
    }
}
