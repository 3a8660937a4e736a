mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use regrel_core::eval::{
    close_labels, confusion, evaluate, metrics_from_counts, ConfusionCounts, GoldRecord, GoldStandard, PairScope, Ratio,
};
use regrel_core::process::ProcessModel;
use regrel_core::{Level, ParaId, ParagraphLabels};

use common::{labels_for, model, shapes};

type Case = (ProcessModel, Vec<(ParagraphLabels, ParagraphLabels)>);

fn case() -> impl Strategy<Value = Case> {
    shapes().prop_flat_map(|s| {
        let m = model(&s);
        let pair = (labels_for(&m), labels_for(&m));
        (Just(m), prop::collection::vec(pair, 1..12))
    })
}

fn build(
    m: &ProcessModel,
    rows: &[(ParagraphLabels, ParagraphLabels)],
) -> (BTreeMap<ParaId, ParagraphLabels>, GoldStandard) {
    let mut preds = BTreeMap::new();
    let mut records = Vec::new();
    for (i, (g, p)) in rows.iter().enumerate() {
        let id = ParaId::new(format!("p{i}"));
        records.push(GoldRecord {
            para_id: id.clone(),
            labels: close_labels(g, m).unwrap(),
            provenance: BTreeMap::new(),
        });
        preds.insert(id, p.clone());
    }
    (preds, GoldStandard::from_records("uc", records, m, None).unwrap())
}

/// Pair-by-pair count straight from the unit definitions.
fn oracle(
    preds: &BTreeMap<ParaId, ParagraphLabels>,
    gold: &GoldStandard,
    m: &ProcessModel,
    level: Level,
    all_pairs: bool,
) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let nodes: Vec<String> = m
        .nodes
        .iter()
        .filter(|n| n.level == level)
        .map(|n| n.node_id.to_string())
        .collect();
    for (id, p) in preds {
        let g = gold.get(id.as_str()).unwrap();
        if level != Level::L1 && !all_pairs {
            let predicted_any = nodes.iter().any(|n| p.get(level, n).is_relevant());
            if !g.level1.is_relevant() && !predicted_any {
                continue;
            }
        }
        for n in &nodes {
            match (g.get(level, n).is_relevant(), p.get(level, n).is_relevant()) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
                (true, false) => fn_ += 1,
            }
        }
    }
    (tp, fp, tn, fn_)
}

/// `r` is `num/den` rounded half-up to two places.
fn is_half_up(num: u64, den: u64, r: f64) -> bool {
    let r100 = (r * 100.0).round() as i128;
    let d = 200 * num as i128 - 2 * r100 * den as i128;
    -(den as i128) <= d && d < den as i128
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn counts_match_pair_oracle((m, rows) in case()) {
        let (preds, gold) = build(&m, &rows);
        for level in Level::ALL {
            for (scope, all) in [(PairScope::Restricted, false), (PairScope::AllParagraphs, true)] {
                let c = confusion(&preds, &gold, level, scope, &m).unwrap();
                prop_assert_eq!((c.tp, c.fp, c.tn, c.fn_), oracle(&preds, &gold, &m, level, all));
            }
        }
    }

    #[test]
    fn metric_identities(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        let counts = ConfusionCounts { tp, fp, tn, fn_ };
        let m = metrics_from_counts(Level::L1, counts);
        let total = tp + fp + tn + fn_;
        let check = |r: Option<regrel_core::eval::RatioView>, num: u64, den: u64| -> Result<(), TestCaseError> {
            match r {
                None => prop_assert_eq!(den, 0),
                Some(v) => {
                    prop_assert_eq!(v.0, Ratio::new(num, den).unwrap());
                    prop_assert_eq!(v.0.value(), num as f64 / den as f64);
                    prop_assert!(is_half_up(num, den, v.0.rounded()));
                }
            }
            Ok(())
        };
        check(m.accuracy, tp + tn, total)?;
        check(m.precision, tp, tp + fp)?;
        check(m.recall, tp, tp + fn_)?;
    }

    #[test]
    fn report_is_consistent_with_confusion((m, rows) in case()) {
        let (preds, gold) = build(&m, &rows);
        let report = evaluate(&preds, &gold, &BTreeMap::new(), &m).unwrap();
        for lm in &report.levels {
            let c = confusion(&preds, &gold, lm.level, PairScope::Restricted, &m).unwrap();
            prop_assert_eq!(lm.counts, c);
        }
        prop_assert_eq!(report.levels_all_pairs.len(), 2);
    }
}
