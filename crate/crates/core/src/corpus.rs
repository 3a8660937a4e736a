//! Regulatory documents, paragraphs, and study-set composition checks.
//!
//! Ingestion works on in-memory text so that it stays IO-free; the companion
//! crate reads files and hands their contents over.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{DocId, ParaId};
use crate::labels::RelevanceType;
use crate::text::{self, ExclusionReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Business-internal document; always business-relevant.
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegulatoryDocument {
    pub doc_id: DocId,
    pub title: String,
    pub origin: Origin,
    #[serde(default)]
    pub jurisdiction: String,
    /// Domain the document applies to, or `domain-independent`.
    #[serde(default = "domain_independent")]
    pub applicable_domain: String,
    #[serde(default)]
    pub source_uri: Option<String>,
}

fn domain_independent() -> String {
    "domain-independent".into()
}

impl RegulatoryDocument {
    /// Placeholder metadata for a document known only by its id.
    pub fn placeholder(doc_id: DocId) -> Self {
        RegulatoryDocument {
            title: doc_id.to_string(),
            doc_id,
            origin: Origin::External,
            jurisdiction: String::new(),
            applicable_domain: domain_independent(),
            source_uri: None,
        }
    }
}

/// Relevance group of a paragraph relative to one business process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Business- and process-relevant.
    A,
    /// Business-relevant, process-irrelevant.
    B,
    /// Neither business- nor process-relevant.
    C,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::A, Group::B, Group::C];

    pub fn parse(tag: &str) -> Option<Group> {
        match tag.trim() {
            "A" | "a" => Some(Group::A),
            "B" | "b" => Some(Group::B),
            "C" | "c" => Some(Group::C),
            _ => None,
        }
    }

    /// Level-0 relevance: relevant for the business as a whole.
    pub fn is_business_relevant(self) -> bool {
        matches!(self, Group::A | Group::B)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
            Group::C => "C",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: ParaId,
    pub doc_id: DocId,
    pub section_title: String,
    #[serde(default)]
    pub subsection: Option<String>,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Group>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_type_hint: Option<RelevanceType>,
}

/// Line-level wire shape; group and type stay strings so unknown tags can be
/// reported with the offending id.
#[derive(Debug, Deserialize)]
struct ParagraphRecord {
    para_id: String,
    doc_id: String,
    section_title: String,
    #[serde(default)]
    subsection: Option<String>,
    body: String,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    gold_type_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("{source_name}:{line}: malformed record: {message}")]
    Malformed {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("duplicate para_id {0}")]
    DuplicateParaId(ParaId),
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(DocId),
    #[error("paragraph {para_id}: unknown group tag {tag:?}")]
    UnknownGroup { para_id: ParaId, tag: String },
    #[error("paragraph {para_id}: unknown gold type hint {tag:?}")]
    UnknownTypeHint { para_id: ParaId, tag: String },
    #[error("paragraph {para_id}: unknown document {doc_id}")]
    UnknownDocument { para_id: ParaId, doc_id: DocId },
    #[error("paragraph {para_id}: group C in internal document {doc_id}")]
    GroupCInInternalDocument { para_id: ParaId, doc_id: DocId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkipReason {
    EmptyBody,
    Excluded { reason: ExclusionReason },
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::EmptyBody => f.write_str("empty body"),
            SkipReason::Excluded { reason } => f.write_str(reason.describe()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFragment {
    pub para_id: ParaId,
    /// `source:line` of the fragment.
    pub location: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub skipped: Vec<SkippedFragment>,
}

impl IngestReport {
    pub fn flagged(&self) -> impl Iterator<Item = &SkippedFragment> {
        self.skipped
            .iter()
            .filter(|s| matches!(s.reason, SkipReason::Excluded { .. }))
    }
}

/// Documents and their paragraphs, in ingestion order. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<RegulatoryDocument>,
    pub paragraphs: Vec<Paragraph>,
}

impl Corpus {
    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs.iter().find(|p| p.para_id.as_str() == id)
    }

    pub fn document(&self, id: &str) -> Option<&RegulatoryDocument> {
        self.documents.iter().find(|d| d.doc_id.as_str() == id)
    }

    /// Serializes paragraphs as jsonl, one record per line.
    pub fn to_jsonl(&self) -> String {
        paragraphs_to_jsonl(&self.paragraphs)
    }
}

pub fn paragraphs_to_jsonl(paragraphs: &[Paragraph]) -> String {
    let mut out = String::new();
    for p in paragraphs {
        // Paragraph has only string/enum fields; serialization cannot fail.
        out.push_str(&serde_json::to_string(p).expect("paragraph serializes"));
        out.push('\n');
    }
    out
}

/// Accumulates paragraphs while enforcing the paragraph invariants.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    documents: Vec<RegulatoryDocument>,
    doc_index: BTreeMap<DocId, usize>,
    check_documents: bool,
    paragraphs: Vec<Paragraph>,
    seen: BTreeSet<ParaId>,
    report: IngestReport,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers document metadata. Once any document is registered, every
    /// paragraph must reference a registered document.
    pub fn with_documents(mut self, docs: impl IntoIterator<Item = RegulatoryDocument>) -> Result<Self, IngestError> {
        for d in docs {
            if self.doc_index.contains_key(&d.doc_id) {
                return Err(IngestError::DuplicateDocId(d.doc_id));
            }
            self.doc_index.insert(d.doc_id.clone(), self.documents.len());
            self.documents.push(d);
        }
        self.check_documents = !self.documents.is_empty();
        Ok(self)
    }

    pub fn add(&mut self, para: Paragraph, location: &str) -> Result<(), IngestError> {
        if !self.seen.insert(para.para_id.clone()) {
            return Err(IngestError::DuplicateParaId(para.para_id));
        }
        let doc = match self.doc_index.get(&para.doc_id) {
            Some(&i) => Some(&self.documents[i]),
            None if self.check_documents => {
                return Err(IngestError::UnknownDocument {
                    para_id: para.para_id,
                    doc_id: para.doc_id,
                })
            }
            None => None,
        };
        if let (Some(doc), Some(Group::C)) = (doc, para.group) {
            if doc.origin == Origin::Internal {
                return Err(IngestError::GroupCInInternalDocument {
                    para_id: para.para_id,
                    doc_id: para.doc_id,
                });
            }
        }
        let skip = if !text::has_content(&para.body) {
            Some(SkipReason::EmptyBody)
        } else {
            text::detect_excluded(&para.body).map(|reason| SkipReason::Excluded { reason })
        };
        match skip {
            Some(reason) => {
                log::warn!("skipping {} at {location}: {reason}", para.para_id);
                self.report.skipped.push(SkippedFragment {
                    para_id: para.para_id,
                    location: location.into(),
                    reason,
                });
            }
            None => {
                self.report.accepted += 1;
                self.paragraphs.push(para);
            }
        }
        Ok(())
    }

    /// Parses jsonl paragraph records and adds them in order.
    pub fn add_jsonl(&mut self, source_name: &str, text: &str) -> Result<(), IngestError> {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ParagraphRecord = serde_json::from_str(line).map_err(|e| IngestError::Malformed {
                source_name: source_name.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let para_id = ParaId(rec.para_id);
            let group = match rec.group {
                None => None,
                Some(tag) => Some(Group::parse(&tag).ok_or_else(|| IngestError::UnknownGroup {
                    para_id: para_id.clone(),
                    tag,
                })?),
            };
            let gold_type_hint = match rec.gold_type_hint {
                None => None,
                Some(tag) => Some(tag.parse::<RelevanceType>().map_err(|_| IngestError::UnknownTypeHint {
                    para_id: para_id.clone(),
                    tag,
                })?),
            };
            let para = Paragraph {
                para_id,
                doc_id: DocId(rec.doc_id),
                section_title: rec.section_title,
                subsection: rec.subsection,
                body: rec.body,
                group,
                gold_type_hint,
            };
            self.add(para, &format!("{source_name}:{}", i + 1))?;
        }
        Ok(())
    }

    /// Splits a plaintext document into paragraphs.
    ///
    /// Lines starting with `# ` set the section title, `## ` the subsection.
    /// Paragraphs are separated by blank lines and numbered
    /// `{doc_id}-p0001`, `{doc_id}-p0002`, ... in order of appearance,
    /// skipped fragments included, so ids stay stable under re-ingestion.
    pub fn add_plaintext(&mut self, doc_id: &DocId, text: &str) -> Result<(), IngestError> {
        let mut section = String::new();
        let mut subsection: Option<String> = None;
        let mut block: Vec<&str> = Vec::new();
        let mut block_start = 0usize;
        let mut counter = 0usize;
        let lines: Vec<&str> = text.lines().collect();
        let mut i = 0usize;
        while i <= lines.len() {
            let line = lines.get(i).copied();
            let boundary = match line {
                None => true,
                Some(l) => l.trim().is_empty() || l.starts_with("# ") || l.starts_with("## "),
            };
            if boundary && !block.is_empty() {
                counter += 1;
                let para = Paragraph {
                    para_id: ParaId(format!("{doc_id}-p{counter:04}")),
                    doc_id: doc_id.clone(),
                    section_title: section.clone(),
                    subsection: subsection.clone(),
                    body: block.join("\n"),
                    group: None,
                    gold_type_hint: None,
                };
                self.add(para, &format!("{doc_id}:{}", block_start + 1))?;
                block.clear();
            }
            match line {
                Some(l) if l.starts_with("## ") => subsection = Some(l[3..].trim().into()),
                Some(l) if l.starts_with("# ") => {
                    section = l[2..].trim().into();
                    subsection = None;
                }
                Some(l) if !l.trim().is_empty() => {
                    if block.is_empty() {
                        block_start = i;
                    }
                    block.push(l);
                }
                _ => {}
            }
            i += 1;
        }
        if self.check_documents || self.doc_index.contains_key(doc_id) {
            return Ok(());
        }
        self.doc_index.insert(doc_id.clone(), self.documents.len());
        self.documents.push(RegulatoryDocument::placeholder(doc_id.clone()));
        Ok(())
    }

    pub fn finish(self) -> (Corpus, IngestReport) {
        (
            Corpus {
                documents: self.documents,
                paragraphs: self.paragraphs,
            },
            self.report,
        )
    }
}

/// Parses `documents.jsonl`.
pub fn parse_documents_jsonl(source_name: &str, text: &str) -> Result<Vec<RegulatoryDocument>, IngestError> {
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: RegulatoryDocument = serde_json::from_str(line).map_err(|e| IngestError::Malformed {
            source_name: source_name.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(d.doc_id.clone()) {
            return Err(IngestError::DuplicateDocId(d.doc_id));
        }
        docs.push(d);
    }
    Ok(docs)
}

/// Counts per group, and per relevance type within group A.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub total: usize,
    pub group_a_compliance: usize,
    pub group_a_informative: usize,
    /// Group A paragraphs without a type hint.
    pub group_a_untyped: usize,
    pub group_b: usize,
    pub group_c: usize,
}

impl Composition {
    pub fn group_a(&self) -> usize {
        self.group_a_compliance + self.group_a_informative + self.group_a_untyped
    }

    pub fn of(paragraphs: &[Paragraph]) -> Self {
        let mut c = Composition {
            total: paragraphs.len(),
            ..Default::default()
        };
        for p in paragraphs {
            match p.group {
                Some(Group::A) => match p.gold_type_hint {
                    Some(RelevanceType::Compliance) => c.group_a_compliance += 1,
                    Some(RelevanceType::Informative) => c.group_a_informative += 1,
                    _ => c.group_a_untyped += 1,
                },
                Some(Group::B) => c.group_b += 1,
                Some(Group::C) => c.group_c += 1,
                None => {}
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StudySetError {
    #[error("paragraph {0} has no group tag")]
    MissingGroup(ParaId),
    #[error("duplicate para_id {0}")]
    DuplicateParaId(ParaId),
    #[error("paragraphs missing from corpus: {0:?}")]
    NotInCorpus(Vec<ParaId>),
}

/// Paragraphs selected for one use case, each tagged with its group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StudySet {
    pub use_case_id: String,
    paragraphs: Vec<Paragraph>,
    composition: Composition,
}

impl StudySet {
    pub fn new(use_case_id: impl Into<String>, paragraphs: Vec<Paragraph>) -> Result<Self, StudySetError> {
        let mut seen = BTreeSet::new();
        for p in &paragraphs {
            if p.group.is_none() {
                return Err(StudySetError::MissingGroup(p.para_id.clone()));
            }
            if !seen.insert(p.para_id.clone()) {
                return Err(StudySetError::DuplicateParaId(p.para_id.clone()));
            }
        }
        let composition = Composition::of(&paragraphs);
        Ok(StudySet {
            use_case_id: use_case_id.into(),
            paragraphs,
            composition,
        })
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn composition(&self) -> Composition {
        self.composition
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn paragraph(&self, id: &str) -> Option<&Paragraph> {
        self.paragraphs.iter().find(|p| p.para_id.as_str() == id)
    }

    pub fn groups(&self) -> BTreeMap<ParaId, Group> {
        self.paragraphs
            .iter()
            .filter_map(|p| p.group.map(|g| (p.para_id.clone(), g)))
            .collect()
    }

    /// Checks that every paragraph of the set exists in `corpus`.
    pub fn check_against(&self, corpus: &Corpus) -> Result<(), StudySetError> {
        let known: BTreeSet<&str> = corpus.paragraphs.iter().map(|p| p.para_id.as_str()).collect();
        let missing: Vec<ParaId> = self
            .paragraphs
            .iter()
            .filter(|p| !known.contains(p.para_id.as_str()))
            .map(|p| p.para_id.clone())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(StudySetError::NotInCorpus(missing))
        }
    }

    /// Keeps the paragraphs matching `keep`, preserving order.
    pub fn subset(&self, use_case_id: impl Into<String>, mut keep: impl FnMut(&Paragraph) -> bool) -> StudySet {
        let paragraphs: Vec<Paragraph> = self.paragraphs.iter().filter(|p| keep(p)).cloned().collect();
        let composition = Composition::of(&paragraphs);
        StudySet {
            use_case_id: use_case_id.into(),
            paragraphs,
            composition,
        }
    }
}

/// Expected composition of a study set (the `--expect` file).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionSpec {
    pub total: usize,
    pub group_a_compliance: usize,
    pub group_a_informative: usize,
    pub group_b: usize,
    pub group_c: usize,
}

/// Study-set compositions of the two published use cases.
pub mod published {
    use super::CompositionSpec;

    /// Travel insurance claims, automated-method input.
    pub const USE_CASE_1: CompositionSpec = CompositionSpec {
        total: 489,
        group_a_compliance: 21,
        group_a_informative: 28,
        group_b: 220,
        group_c: 220,
    };
    /// Know-your-customer banking, automated-method input.
    pub const USE_CASE_2: CompositionSpec = CompositionSpec {
        total: 311,
        group_a_compliance: 24,
        group_a_informative: 7,
        group_b: 140,
        group_c: 140,
    };
    /// Crowd-study subset of use case 1.
    pub const USE_CASE_1_CROWD: CompositionSpec = CompositionSpec {
        total: 147,
        group_a_compliance: 21,
        group_a_informative: 28,
        group_b: 49,
        group_c: 49,
    };
    /// Crowd-study subset of use case 2.
    pub const USE_CASE_2_CROWD: CompositionSpec = CompositionSpec {
        total: 93,
        group_a_compliance: 24,
        group_a_informative: 7,
        group_b: 31,
        group_c: 31,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: String,
    pub expected: usize,
    pub actual: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub use_case_id: String,
    pub checks: Vec<ConstraintCheck>,
    pub passed: bool,
}

/// Compares a study set's recomputed composition with `expected`. Failures
/// are report entries, never errors.
pub fn validate_study_set(set: &StudySet, expected: &CompositionSpec) -> ValidationReport {
    let actual = Composition::of(set.paragraphs());
    let rows = [
        ("total", expected.total, actual.total),
        (
            "group_a_compliance",
            expected.group_a_compliance,
            actual.group_a_compliance,
        ),
        (
            "group_a_informative",
            expected.group_a_informative,
            actual.group_a_informative,
        ),
        ("group_b", expected.group_b, actual.group_b),
        ("group_c", expected.group_c, actual.group_c),
    ];
    let mut checks: Vec<ConstraintCheck> = rows
        .iter()
        .map(|&(name, e, a)| ConstraintCheck {
            constraint: name.into(),
            expected: e,
            actual: a,
            passed: e == a,
        })
        .collect();
    let group_sum = actual.group_a() + actual.group_b + actual.group_c;
    checks.push(ConstraintCheck {
        constraint: "group_sum_equals_total".into(),
        expected: actual.total,
        actual: group_sum,
        passed: group_sum == actual.total,
    });
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        use_case_id: set.use_case_id.clone(),
        checks,
        passed,
    }
}
