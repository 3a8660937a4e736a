//! Synthetic study sets with the published compositions.
//!
//! The annotated corpora are not distributed, so tests, demos and the
//! acceptance run use generated stand-ins: paragraph counts per group and
//! type, node counts per level, and crowd subsets all match the published
//! tables, while the text itself is filler built from small word lists.
//! Everything is a pure function of the inputs.

use std::collections::BTreeMap;

use regrel_core::corpus::{published, CompositionSpec, Group, Origin, Paragraph, RegulatoryDocument, StudySet};
use regrel_core::eval::GoldRecord;
use regrel_core::process::{BusinessContext, NodeKind, ProcessModel, ProcessNode};
use regrel_core::{DocId, Level, NodeId, ParaId, ParagraphLabels, RelevanceType};

/// Which published use case to imitate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UseCase {
    /// Travel insurance claims: 489 paragraphs, nodes 1/7/31.
    One,
    /// Know-your-customer banking: 311 paragraphs, nodes 1/7/19.
    Two,
}

impl UseCase {
    pub fn id(self) -> &'static str {
        match self {
            UseCase::One => "uc1",
            UseCase::Two => "uc2",
        }
    }

    pub fn composition(self) -> CompositionSpec {
        match self {
            UseCase::One => published::USE_CASE_1,
            UseCase::Two => published::USE_CASE_2,
        }
    }

    pub fn crowd_composition(self) -> CompositionSpec {
        match self {
            UseCase::One => published::USE_CASE_1_CROWD,
            UseCase::Two => published::USE_CASE_2_CROWD,
        }
    }

    /// Published node counts per level.
    pub fn node_counts(self) -> [usize; 3] {
        match self {
            UseCase::One => [1, 7, 31],
            UseCase::Two => [1, 7, 19],
        }
    }

    fn vocabulary(self) -> Vocabulary {
        match self {
            UseCase::One => Vocabulary {
                process: "Handle travel insurance claim",
                domain: "insurance",
                verbs: &[
                    "receive", "verify", "assess", "approve", "reject", "pay", "archive", "notify",
                ],
                objects: &[
                    "claim form",
                    "receipt",
                    "medical report",
                    "policy coverage",
                    "bank details",
                    "fraud indicator",
                    "payout",
                    "claimant letter",
                ],
                business: &[
                    "premium",
                    "underwriting",
                    "solvency",
                    "reinsurance",
                    "actuarial",
                    "broker",
                ],
            },
            UseCase::Two => Vocabulary {
                process: "Onboard retail banking customer",
                domain: "banking",
                verbs: &[
                    "collect", "check", "screen", "score", "approve", "escalate", "open", "document",
                ],
                objects: &[
                    "identity card",
                    "address proof",
                    "sanctions list",
                    "risk profile",
                    "beneficial owner",
                    "source of funds",
                    "account",
                    "customer file",
                ],
                business: &["capital", "liquidity", "deposit", "lending", "interest", "branch"],
            },
        }
    }
}

struct Vocabulary {
    process: &'static str,
    domain: &'static str,
    verbs: &'static [&'static str],
    objects: &'static [&'static str],
    business: &'static [&'static str],
}

const UNRELATED: &[&str] = &[
    "aircraft",
    "runway",
    "vessel",
    "harbour",
    "pesticide",
    "turbine",
    "emission",
    "railway",
    "pharmacy",
    "fishery",
];

/// A generated use case: documents, paragraphs, model and expert labels.
#[derive(Debug, Clone)]
pub struct SynthCase {
    pub use_case: UseCase,
    pub documents: Vec<RegulatoryDocument>,
    pub set: StudySet,
    /// Crowd-study subset: every group A paragraph plus the first group B
    /// and C paragraphs up to the published counts.
    pub crowd_set: StudySet,
    pub model: ProcessModel,
    pub gold: Vec<GoldRecord>,
}

/// Splits `total` tasks over `parents` sub-processes as evenly as possible.
fn spread(total: usize, parents: usize) -> Vec<usize> {
    (0..parents)
        .map(|i| total / parents + usize::from(i < total % parents))
        .collect()
}

pub fn model(use_case: UseCase) -> ProcessModel {
    let v = use_case.vocabulary();
    let [_, n2, n3] = use_case.node_counts();
    let root = format!("{}-p", use_case.id());
    let mut nodes = vec![ProcessNode {
        node_id: NodeId::new(root.clone()),
        level: Level::L1,
        name: v.process.into(),
        description: format!("End-to-end process: {}.", v.process.to_lowercase()),
        parent_id: None,
        kind: NodeKind::Process,
    }];
    let mut task = 0usize;
    for (i, n) in spread(n3, n2).into_iter().enumerate() {
        let sub = format!("{}-s{}", use_case.id(), i + 1);
        let object = v.objects[i % v.objects.len()];
        nodes.push(ProcessNode {
            node_id: NodeId::new(sub.clone()),
            level: Level::L2,
            name: format!("Process {object}"),
            description: format!("Sub-process covering every step on the {object}."),
            parent_id: Some(NodeId::new(root.clone())),
            kind: NodeKind::Subprocess,
        });
        for j in 0..n {
            let verb = v.verbs[task % v.verbs.len()];
            let kind = if j + 1 == n && n > 2 {
                NodeKind::ThrowingEvent
            } else {
                NodeKind::Task
            };
            nodes.push(ProcessNode {
                node_id: NodeId::new(format!("{}-t{}", use_case.id(), task + 1)),
                level: Level::L3,
                name: format!("{verb} {object}"),
                description: format!("The clerk must {verb} the {object} and record the outcome."),
                parent_id: Some(NodeId::new(sub.clone())),
                kind,
            });
            task += 1;
        }
    }
    ProcessModel {
        model_id: format!("{}-model", use_case.id()),
        context: BusinessContext {
            business_id: format!("{}-business", use_case.id()),
            location: "Germany".into(),
            domain: v.domain.into(),
            size: "large".into(),
        },
        nodes,
        bpmn_xml: None,
        incomplete: false,
    }
}

pub fn generate(use_case: UseCase) -> SynthCase {
    let v = use_case.vocabulary();
    let spec = use_case.composition();
    let crowd = use_case.crowd_composition();
    let model = model(use_case);
    let tasks: Vec<&ProcessNode> = model.nodes_at(Level::L3).collect();
    let uc = use_case.id();
    let doc = |suffix: &str, origin, title: &str| RegulatoryDocument {
        doc_id: DocId::new(format!("{uc}-{suffix}")),
        title: title.into(),
        origin,
        jurisdiction: "DE".into(),
        applicable_domain: if suffix == "other" {
            "domain-independent".into()
        } else {
            v.domain.into()
        },
        source_uri: None,
    };
    let documents = vec![
        doc("internal", Origin::Internal, "Internal operating guideline"),
        doc("sector", Origin::External, "Sector supervisory circular"),
        doc("other", Origin::External, "Unrelated sector regulation"),
    ];

    let mut paragraphs = Vec::with_capacity(spec.total);
    let mut gold = Vec::with_capacity(spec.total);
    let mut next = |group: Group, doc_suffix: &str, body: String, hint: Option<RelevanceType>| {
        let n = paragraphs.len() + 1;
        let p = Paragraph {
            para_id: ParaId::new(format!("{uc}-{n:04}")),
            doc_id: DocId::new(format!("{uc}-{doc_suffix}")),
            section_title: format!("Section {}", n / 25 + 1),
            subsection: None,
            body,
            group: Some(group),
            gold_type_hint: hint,
        };
        paragraphs.push(p.clone());
        p
    };

    let a_types = std::iter::repeat_n(RelevanceType::Compliance, spec.group_a_compliance).chain(std::iter::repeat_n(
        RelevanceType::Informative,
        spec.group_a_informative,
    ));
    for (i, t) in a_types.enumerate() {
        let task = tasks[(i * 7) % tasks.len()];
        let modal = if t == RelevanceType::Compliance { "must" } else { "may" };
        let body = format!(
            "The undertaking {modal} {} before closing the case. Staff {modal} keep evidence of how they {} for every customer.",
            task.name, task.name
        );
        let p = next(Group::A, if i % 3 == 0 { "internal" } else { "sector" }, body, Some(t));
        gold.push(gold_record(&model, &p.para_id, task, t));
    }
    for i in 0..spec.group_b {
        let w = v.business;
        let body = format!(
            "The firm shall report its {} and {} figures to the supervisor each quarter, together with the {} plan.",
            w[i % w.len()],
            w[(i / w.len() + i + 1) % w.len()],
            w[(i + 3) % w.len()]
        );
        let p = next(Group::B, if i % 2 == 0 { "internal" } else { "sector" }, body, None);
        gold.push(irrelevant(&p.para_id));
    }
    for i in 0..spec.group_c {
        let w = UNRELATED;
        let body = format!(
            "Operators of every {} shall inspect the {} annually and notify the authority about each {} incident.",
            w[i % w.len()],
            w[(i / w.len() + i + 1) % w.len()],
            w[(i + 5) % w.len()]
        );
        let p = next(Group::C, "other", body, None);
        gold.push(irrelevant(&p.para_id));
    }

    let set = StudySet::new(uc, paragraphs).expect("generated ids are unique");
    let mut taken: BTreeMap<Group, usize> = BTreeMap::new();
    let crowd_set = set.subset(format!("{uc}-crowd"), |p| {
        let g = p.group.expect("generated paragraphs carry a group");
        let limit = match g {
            Group::A => usize::MAX,
            Group::B => crowd.group_b,
            Group::C => crowd.group_c,
        };
        let n = taken.entry(g).or_default();
        *n += 1;
        *n <= limit
    });
    SynthCase {
        use_case,
        documents,
        set,
        crowd_set,
        model,
        gold,
    }
}

fn gold_record(model: &ProcessModel, para_id: &ParaId, task: &ProcessNode, t: RelevanceType) -> GoldRecord {
    let mut labels = ParagraphLabels::irrelevant();
    labels.set(Level::L3, &task.node_id, t);
    let parent = model.parent(task.node_id.as_str()).expect("tasks have a parent");
    labels.set(Level::L2, &parent.node_id, t);
    labels.level1 = t;
    GoldRecord {
        para_id: para_id.clone(),
        labels,
        provenance: BTreeMap::from([("level1".to_string(), "synthetic".to_string())]),
    }
}

fn irrelevant(para_id: &ParaId) -> GoldRecord {
    GoldRecord {
        para_id: para_id.clone(),
        labels: ParagraphLabels::irrelevant(),
        provenance: BTreeMap::new(),
    }
}
