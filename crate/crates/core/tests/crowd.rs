mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use regrel_core::crowd::{
    aggregate, AggregationConfig, Phase, Phase1Answer, Phase2Answer, Strategy as Agg, WorkerSubmission,
};
use regrel_core::eval::is_closed;
use regrel_core::process::ProcessModel;
use regrel_core::{Level, NodeId, ParaId, RelevanceType};

use common::{model, rtype, shapes};

#[derive(Debug, Clone, Copy)]
enum Quality {
    Pass,
    FailedTest,
    Attention,
    Contradiction,
}

fn quality() -> impl Strategy<Value = Quality> {
    prop_oneof![
        3 => Just(Quality::Pass),
        1 => Just(Quality::FailedTest),
        1 => Just(Quality::Attention),
        1 => Just(Quality::Contradiction),
    ]
}

fn submission(worker: usize, secs: i64, q: Quality, phase: Phase) -> WorkerSubmission {
    let mut s = WorkerSubmission {
        worker_id: format!("w{worker}"),
        para_id: ParaId::from("x"),
        phase,
        received_at: Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap(),
        phase1_answer: None,
        phase2_answer: None,
        justification: "because".into(),
        test_question_answers: [true, true],
        clicked_forbidden_option: false,
        selected_options: BTreeSet::new(),
    };
    match q {
        Quality::Pass => {}
        Quality::FailedTest => s.test_question_answers = [true, false],
        Quality::Attention => s.clicked_forbidden_option = true,
        Quality::Contradiction => {
            s.selected_options = ["Not relevant".to_string(), "Compliance".to_string()]
                .into_iter()
                .collect()
        }
    }
    s
}

fn passes(s: &WorkerSubmission) -> bool {
    s.test_question_answers == [true, true] && !s.clicked_forbidden_option && s.selected_options.is_empty()
}

/// One paragraph's submissions. Node ids may include unknown ones.
fn submissions(m: &ProcessModel) -> impl Strategy<Value = Vec<WorkerSubmission>> {
    let mut l2: Vec<NodeId> = m.node_ids_at(Level::L2).into_iter().collect();
    l2.push(NodeId::from("ghost2"));
    let mut l3: Vec<NodeId> = m.node_ids_at(Level::L3).into_iter().collect();
    l3.push(NodeId::from("ghost3"));
    l3.push(NodeId::from("s0"));
    let p1 = prop::collection::vec(
        (
            0i64..5,
            quality(),
            any::<bool>(),
            prop::collection::vec(any::<bool>(), l2.len()),
        ),
        1..6,
    );
    let p2 = prop::collection::vec((0i64..5, quality(), prop::collection::vec(rtype(), l3.len())), 0..6);
    (p1, p2).prop_map(move |(p1, p2)| {
        let mut out = Vec::new();
        for (i, (secs, q, root, picks)) in p1.into_iter().enumerate() {
            let mut s = submission(i, secs, q, Phase::Phase1);
            s.phase1_answer = Some(Phase1Answer {
                process_relevant: root,
                subprocess_ids: l2
                    .iter()
                    .zip(picks)
                    .filter(|(_, p)| *p)
                    .map(|(n, _)| n.clone())
                    .collect(),
            });
            out.push(s);
        }
        for (i, (secs, q, types)) in p2.into_iter().enumerate() {
            let mut s = submission(100 + i, secs, q, Phase::Phase2);
            s.phase2_answer = Some(Phase2Answer {
                nodes: l3.iter().cloned().zip(types).collect(),
            });
            out.push(s);
        }
        out
    })
}

fn model_and_submissions() -> impl Strategy<Value = (ProcessModel, Vec<WorkerSubmission>)> {
    shapes().prop_flat_map(|s| {
        let m = model(&s);
        let subs = submissions(&m);
        (Just(m), subs)
    })
}

type Vote = BTreeMap<NodeId, RelevanceType>;

fn votes_of(m: &ProcessModel, subs: &[&WorkerSubmission]) -> Vec<Vote> {
    let l2 = m.node_ids_at(Level::L2);
    let l3 = m.node_ids_at(Level::L3);
    subs.iter()
        .map(|s| match (&s.phase1_answer, &s.phase2_answer) {
            (Some(a), _) => {
                let mut v: Vote = a
                    .subprocess_ids
                    .iter()
                    .filter(|n| l2.contains(*n))
                    .map(|n| (n.clone(), RelevanceType::Informative))
                    .collect();
                if a.process_relevant {
                    v.insert(NodeId::from("p"), RelevanceType::Informative);
                }
                v
            }
            (_, Some(a)) => a
                .nodes
                .iter()
                .filter(|(n, t)| l3.contains(*n) && t.is_relevant())
                .map(|(n, t)| (n.clone(), *t))
                .collect(),
            _ => unreachable!(),
        })
        .collect()
}

/// Independent reading of the three strategies.
fn oracle_combine(strategy: Agg, votes: &[Vote]) -> Vote {
    match strategy {
        Agg::QltFilter => votes.first().cloned().unwrap_or_default(),
        Agg::QltComb => {
            let mut out = Vote::new();
            for v in votes {
                for (n, t) in v {
                    let e = out.entry(n.clone()).or_insert(*t);
                    if *t > *e {
                        *e = *t;
                    }
                }
            }
            out
        }
        Agg::Unfiltered => {
            let nodes: BTreeSet<&NodeId> = votes.iter().flat_map(|v| v.keys()).collect();
            let mut out = Vote::new();
            for n in nodes {
                let types: Vec<RelevanceType> = votes.iter().filter_map(|v| v.get(n).copied()).collect();
                if 2 * types.len() < votes.len() {
                    continue;
                }
                let c = types.iter().filter(|t| **t == RelevanceType::Compliance).count();
                let t = if 2 * c >= types.len() {
                    RelevanceType::Compliance
                } else {
                    RelevanceType::Informative
                };
                out.insert(n.clone(), t);
            }
            out
        }
    }
}

struct Expected {
    l1: RelevanceType,
    l2: Vote,
    l3: Vote,
}

fn oracle(m: &ProcessModel, subs: &[WorkerSubmission], strategy: Agg) -> Expected {
    let pick = |phase: Phase| {
        let mut v: Vec<&WorkerSubmission> = subs
            .iter()
            .filter(|s| s.phase == phase && (strategy == Agg::Unfiltered || passes(s)))
            .collect();
        v.sort_by_key(|s| (s.received_at, s.worker_id.clone()));
        v
    };
    let p1 = oracle_combine(strategy, &votes_of(m, &pick(Phase::Phase1)));
    let root = p1.get(&NodeId::from("p")).copied().unwrap_or_default();
    let mut l2: Vote = p1.into_iter().filter(|(n, _)| n.as_str() != "p").collect();
    let l3 = if root.is_relevant() || !l2.is_empty() {
        oracle_combine(strategy, &votes_of(m, &pick(Phase::Phase2)))
    } else {
        Vote::new()
    };
    for (n, t) in &l3 {
        let parent = m.parent(n).unwrap().node_id.clone();
        let e = l2.entry(parent).or_insert(*t);
        if *t > *e {
            *e = *t;
        }
    }
    let l1 = l2.values().copied().chain([root]).max().unwrap();
    Expected { l1, l2, l3 }
}

fn relevant(v: &BTreeMap<NodeId, RelevanceType>) -> Vote {
    v.iter()
        .filter(|(_, t)| t.is_relevant())
        .map(|(n, t)| (n.clone(), *t))
        .collect()
}

fn strategies() -> impl Strategy<Value = Agg> {
    prop_oneof![Just(Agg::Unfiltered), Just(Agg::QltFilter), Just(Agg::QltComb)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn aggregation_matches_oracle((m, subs) in model_and_submissions(), strategy in strategies()) {
        let agg = aggregate(&subs, &m, &AggregationConfig::with_strategy(strategy)).unwrap();
        let want = oracle(&m, &subs, strategy);
        prop_assert_eq!(agg.labels.level1, want.l1);
        prop_assert_eq!(relevant(&agg.labels.level2), want.l2);
        prop_assert_eq!(relevant(&agg.labels.level3), want.l3);
        prop_assert!(is_closed(&agg.labels, &m).unwrap());
        let known: BTreeSet<NodeId> = m.nodes.iter().map(|n| n.node_id.clone()).collect();
        prop_assert!(agg.labels.level2.keys().chain(agg.labels.level3.keys()).all(|n| known.contains(n)));
    }

    #[test]
    fn input_order_is_irrelevant((m, subs) in model_and_submissions(), strategy in strategies(), seed in any::<u64>()) {
        let config = AggregationConfig::with_strategy(strategy);
        let a = aggregate(&subs, &m, &config).unwrap();
        let mut shuffled = subs.clone();
        let mut x = seed | 1;
        for i in (1..shuffled.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            shuffled.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let b = aggregate(&shuffled, &m, &config).unwrap();
        prop_assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn combining_more_passing_workers_never_drops_labels((m, subs) in model_and_submissions()) {
        let config = AggregationConfig::with_strategy(Agg::QltComb);
        let full = aggregate(&subs, &m, &config).unwrap();
        let first_p1 = subs.iter().position(|s| s.phase == Phase::Phase1).unwrap();
        for drop in 0..subs.len() {
            if drop == first_p1 && subs.iter().filter(|s| s.phase == Phase::Phase1).count() == 1 {
                continue;
            }
            let mut fewer = subs.clone();
            fewer.remove(drop);
            let part = aggregate(&fewer, &m, &config).unwrap();
            prop_assert!(part.labels.level1 <= full.labels.level1);
            for level in [Level::L2, Level::L3] {
                let map = if level == Level::L2 { &part.labels.level2 } else { &part.labels.level3 };
                for (n, t) in map {
                    prop_assert!(*t <= full.labels.get(level, n.as_str()));
                }
            }
        }
    }

    #[test]
    fn later_or_failing_submissions_do_not_change_the_filter((m, subs) in model_and_submissions(), late in 10i64..20) {
        let config = AggregationConfig::with_strategy(Agg::QltFilter);
        let base = aggregate(&subs, &m, &config).unwrap();
        let mut more = subs.clone();
        for s in &subs {
            let mut extra = s.clone();
            extra.worker_id = format!("{}-late", s.worker_id);
            extra.received_at += chrono::Duration::seconds(late);
            more.push(extra);
            let mut bad = s.clone();
            bad.worker_id = format!("{}-bad", s.worker_id);
            bad.received_at -= chrono::Duration::seconds(late);
            bad.clicked_forbidden_option = true;
            more.push(bad);
        }
        let after = aggregate(&more, &m, &config).unwrap();
        prop_assert_eq!(base.labels, after.labels);
    }
}

#[test]
fn phase_two_needs_a_relevant_phase_one() {
    let m = model(&[2, 1]);
    let mut p1 = submission(0, 0, Quality::Pass, Phase::Phase1);
    p1.phase1_answer = Some(Phase1Answer::default());
    let mut p2 = submission(1, 1, Quality::Pass, Phase::Phase2);
    p2.phase2_answer = Some(Phase2Answer {
        nodes: [(NodeId::from("t0_0"), RelevanceType::Compliance)]
            .into_iter()
            .collect(),
    });
    for strategy in [Agg::Unfiltered, Agg::QltFilter, Agg::QltComb] {
        let agg = aggregate(
            &[p1.clone(), p2.clone()],
            &m,
            &AggregationConfig::with_strategy(strategy),
        )
        .unwrap();
        assert_eq!(agg.labels.level1, RelevanceType::Irrelevant);
        assert!(!agg.labels.any_relevant(Level::L3));
    }
}
