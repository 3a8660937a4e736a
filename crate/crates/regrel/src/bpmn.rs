//! Process skeletons from BPMN 2.0 XML.
//!
//! The single `process` element becomes level 1, its `subProcess` and
//! `callActivity` children level 2, and the tasks and throwing events inside
//! those level 3. Gateways, flows, start and catch events are ignored.
//! `documentation` text becomes the node description; nodes without it are
//! left empty and the skeleton is marked incomplete.

use roxmltree::{Document, Node};

use regrel_core::process::{BusinessContext, NodeKind, ProcessError, ProcessModel, ProcessNode};
use regrel_core::{Level, NodeId};

#[derive(Debug, thiserror::Error)]
pub enum BpmnError {
    #[error("malformed xml: {0}")]
    Xml(#[from] roxmltree::Error),
    #[error("no process element found")]
    NoProcess,
    #[error("{0} process elements found; exactly one is supported")]
    MultipleProcesses(usize),
    #[error("process has no sub-processes")]
    Empty,
    #[error("element without id: {0}")]
    MissingId(String),
    #[error("{kind} {id} lies outside a sub-process")]
    Misplaced { kind: &'static str, id: String },
    #[error(transparent)]
    Structure(#[from] ProcessError),
}

const TASKS: [&str; 8] = [
    "task",
    "userTask",
    "serviceTask",
    "sendTask",
    "receiveTask",
    "manualTask",
    "businessRuleTask",
    "scriptTask",
];

const SUBPROCESSES: [&str; 3] = ["subProcess", "callActivity", "transaction"];

fn leaf_kind(node: Node) -> Option<NodeKind> {
    let tag = node.tag_name().name();
    if TASKS.contains(&tag) {
        return Some(NodeKind::Task);
    }
    let throwing = match tag {
        "intermediateThrowEvent" => true,
        // plain end events only terminate; ones with a definition throw
        "endEvent" => node
            .children()
            .any(|c| c.is_element() && c.tag_name().name().ends_with("EventDefinition")),
        _ => false,
    };
    throwing.then_some(NodeKind::ThrowingEvent)
}

fn documentation(node: Node) -> String {
    node.children()
        .filter(|c| c.is_element() && c.tag_name().name() == "documentation")
        .filter_map(|c| c.text())
        .map(str::trim)
        .collect::<Vec<_>>()
        .join("\n")
}

fn make(node: Node, level: Level, parent: Option<&NodeId>, kind: NodeKind) -> Result<ProcessNode, BpmnError> {
    let id = node
        .attribute("id")
        .ok_or_else(|| BpmnError::MissingId(node.tag_name().name().into()))?;
    Ok(ProcessNode {
        node_id: NodeId::from(id),
        level,
        name: node.attribute("name").unwrap_or(id).trim().to_string(),
        description: documentation(node),
        parent_id: parent.cloned(),
        kind,
    })
}

/// Extracts a skeleton. The returned model passes structural validation
/// and has `incomplete` set when any description or the context is
/// missing.
pub fn skeleton_from_bpmn(xml: &str, model_id: &str, context: BusinessContext) -> Result<ProcessModel, BpmnError> {
    let doc = Document::parse(xml)?;
    let processes: Vec<Node> = doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "process")
        .collect();
    let process = match processes.as_slice() {
        [] => return Err(BpmnError::NoProcess),
        [p] => *p,
        many => return Err(BpmnError::MultipleProcesses(many.len())),
    };
    let root = make(process, Level::L1, None, NodeKind::Process)?;
    let root_id = root.node_id.clone();
    let mut nodes = vec![root];
    for child in process.children().filter(Node::is_element) {
        let tag = child.tag_name().name();
        if SUBPROCESSES.contains(&tag) {
            let sub = make(child, Level::L2, Some(&root_id), NodeKind::Subprocess)?;
            let sub_id = sub.node_id.clone();
            nodes.push(sub);
            for leaf in child.children().filter(Node::is_element) {
                if SUBPROCESSES.contains(&leaf.tag_name().name()) {
                    return Err(BpmnError::Misplaced {
                        kind: "nested sub-process",
                        id: leaf.attribute("id").unwrap_or_default().into(),
                    });
                }
                if let Some(kind) = leaf_kind(leaf) {
                    nodes.push(make(leaf, Level::L3, Some(&sub_id), kind)?);
                }
            }
        } else if let Some(kind) = leaf_kind(child) {
            return Err(BpmnError::Misplaced {
                kind: if kind == NodeKind::Task {
                    "task"
                } else {
                    "throwing event"
                },
                id: child.attribute("id").unwrap_or_default().into(),
            });
        }
    }
    if nodes.len() == 1 {
        return Err(BpmnError::Empty);
    }
    let mut model = ProcessModel {
        model_id: model_id.into(),
        context,
        nodes,
        bpmn_xml: Some(xml.into()),
        incomplete: false,
    };
    model.validate()?;
    model.incomplete = model.validate_complete().is_err();
    Ok(model)
}
