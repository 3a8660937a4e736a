//! Business context and the three-level process tree used as query targets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ids::NodeId;
use crate::labels::Level;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusinessContext {
    #[serde(default)]
    pub business_id: String,
    pub location: String,
    pub domain: String,
    pub size: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Process,
    Subprocess,
    Task,
    ThrowingEvent,
}

impl NodeKind {
    fn fits(self, level: Level) -> bool {
        matches!(
            (level, self),
            (Level::L1, NodeKind::Process)
                | (Level::L2, NodeKind::Subprocess)
                | (Level::L3, NodeKind::Task | NodeKind::ThrowingEvent)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessNode {
    pub node_id: NodeId,
    pub level: Level,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub parent_id: Option<NodeId>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProcessError {
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("orphan node {node}: parent {parent} does not exist")]
    Orphan { node: NodeId, parent: NodeId },
    #[error("depth violation at node {0}")]
    DepthViolation(NodeId),
    #[error("node {0}: kind does not match level")]
    KindMismatch(NodeId),
    #[error("model must have exactly one level-1 process node, found {0}")]
    RootCount(usize),
    #[error("business context field {0} is empty")]
    EmptyContext(&'static str),
    #[error("nodes with empty descriptions: {0:?}")]
    EmptyDescriptions(Vec<NodeId>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("malformed process json: {0}")]
    Malformed(String),
}

/// Business context plus a process tree of depth exactly three.
///
/// Construct through [`ProcessModel::load_json`] or
/// [`ProcessModel::validate`]; a model that passed validation is immutable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub model_id: String,
    pub context: BusinessContext,
    pub nodes: Vec<ProcessNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpmn_xml: Option<String>,
    /// Set on skeletons extracted from diagrams whose descriptions are still
    /// missing.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub incomplete: bool,
}

/// How much of the hierarchy goes into a node's query text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryVerbosity {
    #[default]
    DescriptionOnly,
    /// Ancestor descriptions first, separated by blank lines.
    WithAncestors,
}

impl ProcessModel {
    /// Parses `process.json` and enforces every structural and completeness
    /// invariant.
    pub fn load_json(text: &str) -> Result<Self, ProcessError> {
        let model: ProcessModel =
            serde_json::from_str(text).map_err(|e| ProcessError::Malformed(alloc::format!("{e}")))?;
        model.validate()?;
        model.validate_complete()?;
        Ok(model)
    }

    /// Tree invariants: unique ids, one L1 root, L2 under L1, L3 under L2,
    /// kinds matching levels.
    pub fn validate(&self) -> Result<(), ProcessError> {
        let mut by_id: BTreeMap<&NodeId, &ProcessNode> = BTreeMap::new();
        for n in &self.nodes {
            if by_id.insert(&n.node_id, n).is_some() {
                return Err(ProcessError::DuplicateId(n.node_id.clone()));
            }
        }
        let roots = self.nodes.iter().filter(|n| n.level == Level::L1).count();
        if roots != 1 {
            return Err(ProcessError::RootCount(roots));
        }
        for n in &self.nodes {
            if !n.kind.fits(n.level) {
                return Err(ProcessError::KindMismatch(n.node_id.clone()));
            }
            let expected_parent_level = match n.level {
                Level::L1 => {
                    if n.parent_id.is_some() {
                        return Err(ProcessError::DepthViolation(n.node_id.clone()));
                    }
                    continue;
                }
                Level::L2 => Level::L1,
                Level::L3 => Level::L2,
            };
            let Some(pid) = &n.parent_id else {
                return Err(ProcessError::DepthViolation(n.node_id.clone()));
            };
            let Some(parent) = by_id.get(pid) else {
                return Err(ProcessError::Orphan {
                    node: n.node_id.clone(),
                    parent: pid.clone(),
                });
            };
            if parent.level != expected_parent_level {
                return Err(ProcessError::DepthViolation(n.node_id.clone()));
            }
        }
        Ok(())
    }

    /// Context fields and all node descriptions non-empty.
    pub fn validate_complete(&self) -> Result<(), ProcessError> {
        for (name, v) in [
            ("location", &self.context.location),
            ("domain", &self.context.domain),
            ("size", &self.context.size),
        ] {
            if v.trim().is_empty() {
                return Err(ProcessError::EmptyContext(name));
            }
        }
        let empty = self.empty_descriptions();
        if !empty.is_empty() {
            return Err(ProcessError::EmptyDescriptions(empty));
        }
        Ok(())
    }

    pub fn empty_descriptions(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.description.trim().is_empty())
            .map(|n| n.node_id.clone())
            .collect()
    }

    pub fn node(&self, id: &str) -> Option<&ProcessNode> {
        self.nodes.iter().find(|n| n.node_id.as_str() == id)
    }

    pub fn root(&self) -> &ProcessNode {
        self.nodes
            .iter()
            .find(|n| n.level == Level::L1)
            .expect("validated model has a root")
    }

    pub fn nodes_at(&self, level: Level) -> impl Iterator<Item = &ProcessNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ProcessNode> {
        self.nodes
            .iter()
            .filter(move |n| n.parent_id.as_ref().map(|p| p.as_str()) == Some(id))
    }

    pub fn parent(&self, id: &str) -> Option<&ProcessNode> {
        let pid = self.node(id)?.parent_id.as_ref()?;
        self.node(pid)
    }

    /// Ancestors from the root down, excluding the node itself.
    pub fn ancestors(&self, id: &str) -> Vec<&ProcessNode> {
        let mut chain = Vec::new();
        let mut cur = self.parent(id);
        while let Some(n) = cur {
            chain.push(n);
            cur = self.parent(&n.node_id);
        }
        chain.reverse();
        chain
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0usize; 3];
        for n in &self.nodes {
            c[usize::from(n.level.number()) - 1] += 1;
        }
        c
    }

    pub fn node_ids_at(&self, level: Level) -> BTreeSet<NodeId> {
        self.nodes_at(level).map(|n| n.node_id.clone()).collect()
    }
}

/// Text used to query for `node_id`.
pub fn node_query_text(model: &ProcessModel, node_id: &str, verbosity: QueryVerbosity) -> Result<String, ProcessError> {
    let node = model
        .node(node_id)
        .ok_or_else(|| ProcessError::UnknownNode(NodeId::from(node_id)))?;
    match verbosity {
        QueryVerbosity::DescriptionOnly => Ok(node.description.clone()),
        QueryVerbosity::WithAncestors => {
            let mut parts: Vec<&str> = model
                .ancestors(node_id)
                .into_iter()
                .map(|n| n.description.as_str())
                .collect();
            parts.push(&node.description);
            Ok(parts.join("\n\n"))
        }
    }
}
