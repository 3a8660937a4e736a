//! Zero-shot relevance judging with a chat-completion model.
//!
//! A prompt has three blocks: the task description (fixed per iteration),
//! the business block (fixed per process) and the regulation block (one per
//! paragraph). The model answers in a fixed JSON schema which is parsed into
//! per-level labels.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::{Origin, Paragraph, RegulatoryDocument};
use crate::eval::{self, close_labels};
use crate::ids::{NodeId, ParaId};
use crate::labels::{Level, ParagraphLabels, RelevanceType};
use crate::process::{NodeKind, ProcessModel};
use crate::retrieval::ProviderError;

/// Prompt length range expected of the final prompt iteration.
pub const PROMPT_WORDS_MIN: usize = 1500;
pub const PROMPT_WORDS_MAX: usize = 2300;

pub const CLEAR_RELATIONS_INSTRUCTION: &str = "Only match clear relations between the regulatory text and the business process. Do not label a node as relevant because of a vague, indirect or purely generic connection.";

pub const RECALL_PRIORITY_SENTENCE: &str = "Recall is the most important measurement for this task: missing a relevant regulatory text is worse than flagging one that an expert later rejects.";

const TASK_INTRO: &str = "You support a compliance analyst who has to find the regulatory requirements that apply to a business process. Part 2 describes the business and one of its processes at three levels of detail: level 1 is the process as a whole, level 2 are its sub-processes, level 3 are the tasks and throwing events inside each sub-process. Part 3 contains one paragraph of a regulatory document together with information about that document.

Decide for the process, for every sub-process and for every task or throwing event whether the regulatory paragraph is relevant. Use one of three relevance types:
- \"irrelevant\": the paragraph has no bearing on the node.
- \"informative\": the paragraph gives useful background for the node but does not oblige the business to act.
- \"compliance\": the business must comply with the paragraph when carrying out the node.

A sub-process can only be relevant if the process is relevant, and a task or event can only be relevant if its sub-process is relevant.";

const TASK_ANSWER_FORMAT: &str = "Answer with a single JSON object and nothing else, using exactly these keys:
{\"level1\": \"irrelevant|informative|compliance\", \"level2\": {\"<sub-process id>\": \"informative|compliance\"}, \"level3\": {\"<task or event id>\": \"informative|compliance\"}, \"justification\": \"<short reasoning>\"}
List under level2 and level3 only the ids that are relevant; ids that are left out count as irrelevant. Use the ids exactly as written in Part 2. Keep the justification short and name the part of the regulatory text that drives the decision.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Iteration {
    V1,
    V2,
    #[default]
    V3,
}

impl Iteration {
    pub fn as_str(self) -> &'static str {
        match self {
            Iteration::V1 => "v1",
            Iteration::V2 => "v2",
            Iteration::V3 => "v3",
        }
    }
}

impl fmt::Display for Iteration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Iteration {
    type Err = JudgeError;
    fn from_str(s: &str) -> Result<Self, JudgeError> {
        match s.trim() {
            "v1" => Ok(Iteration::V1),
            "v2" => Ok(Iteration::V2),
            "v3" => Ok(Iteration::V3),
            other => Err(JudgeError::UnknownIteration(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub para_id: ParaId,
    pub iteration: Iteration,
    pub task_description: String,
    pub business_block: String,
    pub regulation_block: String,
    pub rendered: String,
    pub word_count: usize,
}

impl PromptBundle {
    /// Set when a final-iteration prompt falls outside the expected length.
    pub fn length_warning(&self) -> Option<JudgeWarning> {
        let out = !(PROMPT_WORDS_MIN..=PROMPT_WORDS_MAX).contains(&self.word_count);
        (self.iteration == Iteration::V3 && out).then(|| JudgeWarning::PromptLength {
            para_id: self.para_id.clone(),
            words: self.word_count,
        })
    }

    pub fn request(&self, temperature: f64) -> ChatRequest {
        ChatRequest {
            messages: alloc::vec![ChatMessage {
                role: "user".into(),
                content: self.rendered.clone(),
            }],
            temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub raw_reply: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("process model incomplete, empty descriptions: {0:?}")]
    IncompleteModel(Vec<NodeId>),
    #[error("unknown prompt iteration {0:?}")]
    UnknownIteration(String),
    #[error("paragraph {para_id} belongs to {doc}, prompt built for {given}")]
    DocumentMismatch {
        para_id: ParaId,
        doc: String,
        given: String,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unparseable reply: {0}")]
    Parse(ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeWarning {
    PromptLength {
        para_id: ParaId,
        words: usize,
    },
    /// The reply violated propagation and was closed upward.
    ClosureApplied {
        para_id: ParaId,
    },
    /// The reply marked too many sub-processes and was reset to irrelevant.
    SubprocessFilter {
        para_id: ParaId,
        relevant_subprocesses: usize,
    },
}

fn task_description(iteration: Iteration) -> String {
    let mut s = String::from(TASK_INTRO);
    if iteration >= Iteration::V2 {
        s.push_str("\n\n");
        s.push_str(CLEAR_RELATIONS_INSTRUCTION);
    }
    if iteration >= Iteration::V3 {
        s.push_str("\n\n");
        s.push_str(RECALL_PRIORITY_SENTENCE);
    }
    s.push_str("\n\n");
    s.push_str(TASK_ANSWER_FORMAT);
    format!("Part 1: Task\n{s}")
}

/// Business context and all node descriptions, nested by sub-process.
pub fn business_block(model: &ProcessModel) -> Result<String, JudgeError> {
    let empty = model.empty_descriptions();
    if !empty.is_empty() || model.incomplete {
        return Err(JudgeError::IncompleteModel(empty));
    }
    let c = &model.context;
    let root = model.root();
    let mut s = format!(
        "Part 2: Business process\nOrganisation: a {} business in the {} domain, located in {}.\n\nProcess {} \"{}\":\n{}\n",
        c.size, c.domain, c.location, root.node_id, root.name, root.description
    );
    for sub in model.children(&root.node_id) {
        s.push_str(&format!(
            "\nSub-process {} \"{}\":\n{}\n",
            sub.node_id, sub.name, sub.description
        ));
        for leaf in model.children(&sub.node_id) {
            let kind = match leaf.kind {
                NodeKind::ThrowingEvent => "Throwing event",
                _ => "Task",
            };
            s.push_str(&format!(
                "- {kind} {} \"{}\": {}\n",
                leaf.node_id, leaf.name, leaf.description
            ));
        }
    }
    Ok(String::from(s.trim_end()))
}

/// Paragraph text with document context; later iterations add applicability.
pub fn regulation_block(para: &Paragraph, doc: &RegulatoryDocument, iteration: Iteration) -> String {
    let mut s = format!(
        "Part 3: Regulatory text\nDocument: {}\nSection: {}\n",
        doc.title, para.section_title
    );
    if let Some(sub) = &para.subsection {
        s.push_str(&format!("Subsection: {sub}\n"));
    }
    if iteration >= Iteration::V2 {
        let origin = match doc.origin {
            Origin::Internal => "internal document of the business",
            Origin::External => "external regulation",
        };
        let jurisdiction = if doc.jurisdiction.is_empty() {
            "not stated"
        } else {
            doc.jurisdiction.as_str()
        };
        s.push_str(&format!(
            "Document origin: {origin}\nJurisdiction: {jurisdiction}\nApplicable domain: {}\n",
            doc.applicable_domain
        ));
    }
    s.push_str(&format!("Paragraph {}:\n{}", para.para_id, para.body.trim()));
    s
}

/// Builds the full prompt for one paragraph. Pure in its inputs.
pub fn build_prompt(
    model: &ProcessModel,
    para: &Paragraph,
    doc: &RegulatoryDocument,
    iteration: Iteration,
) -> Result<PromptBundle, JudgeError> {
    if para.doc_id != doc.doc_id {
        return Err(JudgeError::DocumentMismatch {
            para_id: para.para_id.clone(),
            doc: para.doc_id.to_string(),
            given: doc.doc_id.to_string(),
        });
    }
    let business = business_block(model)?;
    Ok(assemble(para, doc, iteration, task_description(iteration), business))
}

fn assemble(
    para: &Paragraph,
    doc: &RegulatoryDocument,
    iteration: Iteration,
    task: String,
    business: String,
) -> PromptBundle {
    let regulation = regulation_block(para, doc, iteration);
    let rendered = format!("{task}\n\n{business}\n\n{regulation}");
    PromptBundle {
        para_id: para.para_id.clone(),
        iteration,
        word_count: crate::text::word_count(&rendered),
        task_description: task,
        business_block: business,
        regulation_block: regulation,
        rendered,
    }
}

/// Prompts for a whole study set, sharing the task and business blocks.
/// Paragraphs whose document is missing from `documents` get placeholder
/// metadata.
pub fn build_prompts<'a>(
    model: &ProcessModel,
    paragraphs: impl IntoIterator<Item = &'a Paragraph>,
    documents: &BTreeMap<crate::ids::DocId, RegulatoryDocument>,
    iteration: Iteration,
) -> Result<Vec<PromptBundle>, JudgeError> {
    let task = task_description(iteration);
    let business = business_block(model)?;
    Ok(paragraphs
        .into_iter()
        .map(|p| {
            let placeholder;
            let doc = match documents.get(&p.doc_id) {
                Some(d) => d,
                None => {
                    placeholder = RegulatoryDocument::placeholder(p.doc_id.clone());
                    &placeholder
                }
            };
            assemble(p, doc, iteration, task.clone(), business.clone())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// One completion per call; implementations must not retry semantically.
pub trait ChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureMode {
    /// Close propagation violations upward and warn.
    #[default]
    Lenient,
    /// Reject replies that violate propagation.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub temperature: f64,
    pub closure: ClosureMode,
    /// Reset judgments marking at least this many sub-processes relevant.
    pub subprocess_threshold: Option<usize>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            temperature: 0.0,
            closure: ClosureMode::Lenient,
            subprocess_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmJudgment {
    pub para_id: ParaId,
    #[serde(flatten)]
    pub labels: ParagraphLabels,
    pub justification: String,
    pub raw_reply: String,
}

fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses a reply in the fixed schema. Node ids must exist at the level
/// they are listed under. Propagation is not checked here.
pub fn parse_reply(raw: &str, model: &ProcessModel) -> Result<(ParagraphLabels, String), ParseError> {
    let fail = |message: String| ParseError {
        message,
        raw_reply: raw.into(),
    };
    let value: Value = serde_json::from_str(strip_fence(raw)).map_err(|e| fail(format!("invalid json: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| fail("reply is not a json object".into()))?;
    let parse_type = |v: &Value, at: &str| -> Result<RelevanceType, ParseError> {
        v.as_str()
            .and_then(|s| s.trim().to_ascii_lowercase().parse().ok())
            .ok_or_else(|| fail(format!("invalid relevance type at {at}: {v}")))
    };
    let level1 = parse_type(
        obj.get("level1").ok_or_else(|| fail("missing key level1".into()))?,
        "level1",
    )?;
    let mut labels = ParagraphLabels {
        level1,
        ..ParagraphLabels::default()
    };
    for (key, level) in [("level2", Level::L2), ("level3", Level::L3)] {
        let entries = match obj.get(key) {
            None | Some(Value::Null) => continue,
            Some(Value::Object(m)) => m,
            Some(other) => return Err(fail(format!("{key} is not an object: {other}"))),
        };
        for (node, v) in entries {
            match model.node(node) {
                Some(n) if n.level == level => {}
                Some(_) => return Err(fail(format!("node {node} is not a level-{level} node"))),
                None => return Err(fail(format!("unknown node id {node}"))),
            }
            let t = parse_type(v, node)?;
            labels.set(level, &NodeId::from(node.as_str()), t);
        }
    }
    labels.compact();
    let justification = match obj.get("justification") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(fail(format!("justification is not a string: {other}"))),
    };
    Ok((labels, justification))
}

/// Serializes labels in the reply schema; inverse of [`parse_reply`].
pub fn reply_json(labels: &ParagraphLabels, justification: &str) -> String {
    let level = |m: &BTreeMap<NodeId, RelevanceType>| {
        Value::Object(
            m.iter()
                .filter(|(_, t)| t.is_relevant())
                .map(|(n, t)| (n.to_string(), Value::from(t.as_str())))
                .collect::<Map<_, _>>(),
        )
    };
    let mut obj = Map::new();
    obj.insert("level1".into(), labels.level1.as_str().into());
    obj.insert("level2".into(), level(&labels.level2));
    obj.insert("level3".into(), level(&labels.level3));
    obj.insert("justification".into(), justification.into());
    Value::Object(obj).to_string()
}

/// Resets the judgment to irrelevant when it marks at least `threshold`
/// sub-processes relevant.
pub fn apply_subprocess_filter(judgment: &mut LlmJudgment, threshold: usize) -> Option<JudgeWarning> {
    let relevant = judgment.labels.level2.values().filter(|t| t.is_relevant()).count();
    if relevant < threshold {
        return None;
    }
    judgment.labels = ParagraphLabels::irrelevant();
    Some(JudgeWarning::SubprocessFilter {
        para_id: judgment.para_id.clone(),
        relevant_subprocesses: relevant,
    })
}

/// Turns a raw reply into a judgment under `config`.
pub fn interpret_reply(
    para_id: &ParaId,
    raw: String,
    model: &ProcessModel,
    config: &JudgeConfig,
) -> Result<(LlmJudgment, Vec<JudgeWarning>), JudgeError> {
    let mut warnings = Vec::new();
    let (parsed, justification) = parse_reply(&raw, model).map_err(JudgeError::Parse)?;
    let labels = match config.closure {
        ClosureMode::Strict => {
            let closed = eval::is_closed(&parsed, model).map_err(|e| {
                JudgeError::Parse(ParseError {
                    message: e.to_string(),
                    raw_reply: raw.clone(),
                })
            })?;
            if !closed {
                return Err(JudgeError::Parse(ParseError {
                    message: "propagation violation".into(),
                    raw_reply: raw,
                }));
            }
            parsed
        }
        ClosureMode::Lenient => {
            let closed = close_labels(&parsed, model).map_err(|e| {
                JudgeError::Parse(ParseError {
                    message: e.to_string(),
                    raw_reply: raw.clone(),
                })
            })?;
            if closed != parsed {
                log::warn!("{para_id}: reply violated propagation, closed upward");
                warnings.push(JudgeWarning::ClosureApplied {
                    para_id: para_id.clone(),
                });
            }
            closed
        }
    };
    let mut judgment = LlmJudgment {
        para_id: para_id.clone(),
        labels,
        justification,
        raw_reply: raw,
    };
    if let Some(threshold) = config.subprocess_threshold {
        warnings.extend(apply_subprocess_filter(&mut judgment, threshold));
    }
    Ok((judgment, warnings))
}

/// Sends exactly one completion request and parses the first reply.
pub fn judge(
    provider: &dyn ChatProvider,
    bundle: &PromptBundle,
    model: &ProcessModel,
    config: &JudgeConfig,
) -> Result<(LlmJudgment, Vec<JudgeWarning>), JudgeError> {
    let raw = provider.complete(&bundle.request(config.temperature))?;
    let (judgment, mut warnings) = interpret_reply(&bundle.para_id, raw, model, config)?;
    if let Some(w) = bundle.length_warning() {
        warnings.insert(0, w);
    }
    Ok((judgment, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Group;
    use crate::ids::DocId;
    use crate::process::tests::small_model;
    use core::cell::Cell;
    use RelevanceType::*;

    fn para(id: &str, body: &str) -> Paragraph {
        Paragraph {
            para_id: ParaId::from(id),
            doc_id: DocId::from("d"),
            section_title: "Claims".into(),
            subsection: Some("Notification".into()),
            body: body.into(),
            group: Some(Group::A),
            gold_type_hint: None,
        }
    }

    fn doc() -> RegulatoryDocument {
        RegulatoryDocument {
            doc_id: DocId::from("d"),
            title: "Insurance Contracts Act".into(),
            origin: Origin::External,
            jurisdiction: "Australia".into(),
            applicable_domain: "insurance".into(),
            source_uri: None,
        }
    }

    struct Canned<'a> {
        reply: &'a str,
        calls: Cell<usize>,
    }

    impl ChatProvider for Canned<'_> {
        fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
            assert_eq!(request.temperature, 0.0);
            self.calls.set(self.calls.get() + 1);
            Ok(self.reply.into())
        }
    }

    #[test]
    fn iterations_add_their_sentences() {
        let m = small_model();
        let p = para("x", "An insurer must notify the insured.");
        let v1 = build_prompt(&m, &p, &doc(), Iteration::V1).unwrap();
        let v2 = build_prompt(&m, &p, &doc(), Iteration::V2).unwrap();
        let v3 = build_prompt(&m, &p, &doc(), Iteration::V3).unwrap();
        assert!(!v1.rendered.contains(CLEAR_RELATIONS_INSTRUCTION));
        assert!(!v1.rendered.contains("Applicable domain"));
        assert!(v2.rendered.contains(CLEAR_RELATIONS_INSTRUCTION));
        assert!(v2.rendered.contains("Applicable domain: insurance"));
        assert!(v2.rendered.contains("Jurisdiction: Australia"));
        assert!(!v2
            .rendered
            .to_lowercase()
            .contains("recall is the most important measurement"));
        assert!(v3
            .rendered
            .to_lowercase()
            .contains("recall is the most important measurement"));
        assert!(v3.rendered.contains(CLEAR_RELATIONS_INSTRUCTION));
    }

    #[test]
    fn blocks_in_order_and_shared() {
        let m = small_model();
        let a = build_prompt(&m, &para("a", "first body"), &doc(), Iteration::V2).unwrap();
        let b = build_prompt(&m, &para("b", "second body"), &doc(), Iteration::V2).unwrap();
        assert_eq!(a.task_description, b.task_description);
        assert_eq!(a.business_block, b.business_block);
        assert_ne!(a.regulation_block, b.regulation_block);
        let t = a.rendered.find(&a.task_description).unwrap();
        let bz = a.rendered.find(&a.business_block).unwrap();
        let r = a.rendered.find(&a.regulation_block).unwrap();
        assert!(t < bz && bz < r);
        for id in ["p", "s1", "s2", "t1", "t2", "e1"] {
            assert!(a.business_block.contains(&format!("{id} description")));
        }
        assert_eq!(
            a,
            build_prompt(&m, &para("a", "first body"), &doc(), Iteration::V2).unwrap()
        );
    }

    #[test]
    fn length_warning_only_for_v3() {
        let m = small_model();
        let p = para("x", "short");
        let v3 = build_prompt(&m, &p, &doc(), Iteration::V3).unwrap();
        assert!(v3.word_count < PROMPT_WORDS_MIN);
        assert!(matches!(v3.length_warning(), Some(JudgeWarning::PromptLength { .. })));
        let v1 = build_prompt(&m, &p, &doc(), Iteration::V1).unwrap();
        assert!(v1.length_warning().is_none());
    }

    #[test]
    fn incomplete_model_lists_nodes() {
        let mut m = small_model();
        m.nodes[3].description.clear();
        let err = build_prompt(&m, &para("x", "b"), &doc(), Iteration::V1).unwrap_err();
        assert_eq!(err, JudgeError::IncompleteModel(alloc::vec![NodeId::from("t1")]));
    }

    #[test]
    fn negative_reply() {
        let m = small_model();
        let b = build_prompt(&m, &para("x", "b"), &doc(), Iteration::V1).unwrap();
        let p = Canned {
            reply: r#"{"level1":"irrelevant","level2":{},"level3":{},"justification":"none"}"#,
            calls: Cell::new(0),
        };
        let (j, w) = judge(&p, &b, &m, &JudgeConfig::default()).unwrap();
        assert_eq!(p.calls.get(), 1);
        assert_eq!(j.labels, ParagraphLabels::irrelevant());
        assert_eq!(j.raw_reply, p.reply);
        assert!(w.is_empty());
    }

    #[test]
    fn closure_strict_and_lenient() {
        let m = small_model();
        let raw = String::from(r#"{"level1":"irrelevant","level3":{"t1":"compliance"},"justification":""}"#);
        let strict = JudgeConfig {
            closure: ClosureMode::Strict,
            ..JudgeConfig::default()
        };
        match interpret_reply(&ParaId::from("x"), raw.clone(), &m, &strict) {
            Err(JudgeError::Parse(e)) => {
                assert_eq!(e.message, "propagation violation");
                assert_eq!(e.raw_reply, raw);
            }
            other => panic!("{other:?}"),
        }
        let (j, w) = interpret_reply(&ParaId::from("x"), raw, &m, &JudgeConfig::default()).unwrap();
        assert_eq!(j.labels.level1, Compliance);
        assert_eq!(j.labels.get(Level::L2, "s1"), Compliance);
        assert_eq!(
            w,
            [JudgeWarning::ClosureApplied {
                para_id: ParaId::from("x")
            }]
        );
        let again = close_labels(&j.labels, &m).unwrap();
        assert_eq!(again, j.labels);
    }

    #[test]
    fn parse_errors_carry_reply() {
        let m = small_model();
        for (raw, needle) in [
            ("not json", "invalid json"),
            (r#"{"level2":{}}"#, "missing key level1"),
            (r#"{"level1":"maybe"}"#, "invalid relevance type"),
            (
                r#"{"level1":"compliance","level3":{"zz":"compliance"}}"#,
                "unknown node id zz",
            ),
            (
                r#"{"level1":"compliance","level2":{"t1":"compliance"}}"#,
                "not a level-2 node",
            ),
        ] {
            let e = parse_reply(raw, &m).unwrap_err();
            assert!(e.message.contains(needle), "{raw}: {}", e.message);
            assert_eq!(e.raw_reply, raw);
        }
    }

    #[test]
    fn fenced_reply_and_round_trip() {
        let m = small_model();
        let raw = "```json\n{\"level1\":\"informative\",\"level2\":{\"s2\":\"informative\"},\"level3\":{\"e1\":\"informative\"},\"justification\":\"events\"}\n```";
        let (labels, just) = parse_reply(raw, &m).unwrap();
        assert_eq!(labels.get(Level::L3, "e1"), Informative);
        let again = parse_reply(&reply_json(&labels, &just), &m).unwrap();
        assert_eq!(again, (labels, just));
    }

    #[test]
    fn subprocess_post_filter() {
        let m = small_model();
        let raw = String::from(r#"{"level1":"compliance","level2":{"s1":"compliance","s2":"informative"}}"#);
        let cfg = JudgeConfig {
            subprocess_threshold: Some(2),
            ..JudgeConfig::default()
        };
        let (j, w) = interpret_reply(&ParaId::from("x"), raw.clone(), &m, &cfg).unwrap();
        assert_eq!(j.labels, ParagraphLabels::irrelevant());
        assert!(matches!(
            w[0],
            JudgeWarning::SubprocessFilter {
                relevant_subprocesses: 2,
                ..
            }
        ));
        let cfg3 = JudgeConfig {
            subprocess_threshold: Some(3),
            ..JudgeConfig::default()
        };
        let (j, w) = interpret_reply(&ParaId::from("x"), raw, &m, &cfg3).unwrap();
        assert_eq!(j.labels.level1, Compliance);
        assert!(w.is_empty());
    }

    #[test]
    fn judgment_jsonl_shape() {
        let j = LlmJudgment {
            para_id: ParaId::from("x"),
            labels: ParagraphLabels::irrelevant(),
            justification: "j".into(),
            raw_reply: "{}".into(),
        };
        let s = serde_json::to_string(&j).unwrap();
        assert_eq!(
            s,
            r#"{"para_id":"x","level1":"irrelevant","level2":{},"level3":{},"justification":"j","raw_reply":"{}"}"#
        );
        assert_eq!(serde_json::from_str::<LlmJudgment>(&s).unwrap(), j);
    }
}
