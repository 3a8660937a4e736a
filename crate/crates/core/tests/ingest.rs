mod common;

use proptest::prelude::*;
use regrel_core::corpus::{
    paragraphs_to_jsonl, published, validate_study_set, CompositionSpec, CorpusBuilder, Group, Paragraph, SkipReason,
    StudySet,
};
use regrel_core::text::{detect_excluded, ExclusionReason};
use regrel_core::{DocId, ParaId, RelevanceType};

const WORDS: &[&str] = &[
    "insurer", "claim", "must", "record", "customer", "payment", "within", "days", "the", "report",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..12).prop_map(|w| format!("{}.", w.join(" ")))
}

fn group() -> impl Strategy<Value = Option<Group>> {
    prop_oneof![
        Just(None),
        Just(Some(Group::A)),
        Just(Some(Group::B)),
        Just(Some(Group::C))
    ]
}

fn paragraphs() -> impl Strategy<Value = Vec<Paragraph>> {
    prop::collection::vec(
        (
            sentence(),
            group(),
            prop::option::of(prop_oneof![
                Just(RelevanceType::Compliance),
                Just(RelevanceType::Informative)
            ]),
            prop::option::of("[a-z]{1,8}"),
        ),
        0..20,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (body, group, hint, sub))| Paragraph {
                para_id: ParaId::new(format!("x{i}")),
                doc_id: DocId::from(if i % 2 == 0 { "d1" } else { "d2" }),
                section_title: format!("Section {}", i / 3),
                subsection: sub,
                body,
                group,
                gold_type_hint: hint,
            })
            .collect()
    })
}

fn ingest_jsonl(text: &str) -> Vec<Paragraph> {
    let mut b = CorpusBuilder::new();
    b.add_jsonl("in.jsonl", text).unwrap();
    b.finish().0.paragraphs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn jsonl_round_trips_byte_for_byte(paras in paragraphs()) {
        let text = paragraphs_to_jsonl(&paras);
        let back = ingest_jsonl(&text);
        prop_assert_eq!(&back, &paras);
        prop_assert_eq!(paragraphs_to_jsonl(&back), text);
    }

    #[test]
    fn plaintext_paragraphs_are_numbered_in_order(
        sections in prop::collection::vec(prop::collection::vec(sentence(), 1..4), 1..4),
        blank in prop::collection::vec("[ \t]{0,3}", 0..3),
    ) {
        let mut text = String::new();
        let mut expected = Vec::new();
        for (s, paras) in sections.iter().enumerate() {
            text.push_str(&format!("# Title {s}\n"));
            for p in paras {
                text.push_str(p);
                text.push('\n');
                for b in &blank {
                    text.push_str(b);
                    text.push('\n');
                }
                text.push('\n');
                expected.push((format!("Title {s}"), p.clone()));
            }
        }
        let doc = DocId::from("reg");
        let run = || {
            let mut b = CorpusBuilder::new();
            b.add_plaintext(&doc, &text).unwrap();
            b.finish()
        };
        let (corpus, report) = run();
        prop_assert_eq!(report.accepted, expected.len());
        prop_assert_eq!(corpus.paragraphs.len(), expected.len());
        for (i, (p, (title, body))) in corpus.paragraphs.iter().zip(&expected).enumerate() {
            prop_assert_eq!(p.para_id.as_str(), format!("reg-p{:04}", i + 1));
            prop_assert_eq!(&p.section_title, title);
            prop_assert_eq!(&p.body, body);
        }
        prop_assert_eq!(run().0, corpus);
    }

    #[test]
    fn short_numbered_headings_make_a_table_of_contents(
        headings in prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 1..5), 3..8),
        one_line in any::<bool>(),
    ) {
        let parts: Vec<String> = headings
            .iter()
            .enumerate()
            .map(|(i, w)| format!("{}. {}", i + 1, w.join(" ")))
            .collect();
        let body = parts.join(if one_line { " " } else { "\n" });
        prop_assert_eq!(detect_excluded(&body), Some(ExclusionReason::SuspectedTableOfContents));
    }

    #[test]
    fn ordinary_sentences_are_never_excluded(body in prop::collection::vec(sentence(), 1..5)) {
        prop_assert_eq!(detect_excluded(&body.join(" ")), None);
    }

    #[test]
    fn validation_checks_every_group(a_c in 0usize..5, a_i in 0usize..5, b in 0usize..5, c in 0usize..5) {
        let mut paras = Vec::new();
        let mut push = |g: Group, hint: Option<RelevanceType>| {
            let mut p = common::paragraph(&format!("q{}", paras.len()), "Text.", Some(g));
            p.gold_type_hint = hint;
            paras.push(p);
        };
        (0..a_c).for_each(|_| push(Group::A, Some(RelevanceType::Compliance)));
        (0..a_i).for_each(|_| push(Group::A, Some(RelevanceType::Informative)));
        (0..b).for_each(|_| push(Group::B, None));
        (0..c).for_each(|_| push(Group::C, None));
        let set = StudySet::new("t", paras).unwrap();
        let spec = CompositionSpec {
            total: a_c + a_i + b + c,
            group_a_compliance: a_c,
            group_a_informative: a_i,
            group_b: b,
            group_c: c,
        };
        prop_assert!(validate_study_set(&set, &spec).passed);
        let off = CompositionSpec { group_b: b + 1, ..spec };
        let report = validate_study_set(&set, &off);
        prop_assert!(!report.passed);
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.constraint.as_str()).collect();
        prop_assert_eq!(failed, vec!["group_b"]);
    }
}

#[test]
fn blank_bodies_are_skipped_not_accepted() {
    let paras = vec![
        common::paragraph("e1", "   ", None),
        common::paragraph("e2", "--", None),
        common::paragraph("ok", "The insurer pays.", None),
    ];
    let mut b = CorpusBuilder::new();
    b.add_jsonl("in.jsonl", &paragraphs_to_jsonl(&paras)).unwrap();
    let (corpus, report) = b.finish();
    assert_eq!(corpus.paragraphs.len(), 1);
    assert_eq!(report.accepted, 1);
    assert!(report.skipped.iter().all(|s| s.reason == SkipReason::EmptyBody));
    assert_eq!(report.flagged().count(), 0);
}

#[test]
fn published_compositions_add_up() {
    for spec in [
        published::USE_CASE_1,
        published::USE_CASE_2,
        published::USE_CASE_1_CROWD,
        published::USE_CASE_2_CROWD,
    ] {
        assert_eq!(
            spec.group_a_compliance + spec.group_a_informative + spec.group_b + spec.group_c,
            spec.total
        );
    }
}
