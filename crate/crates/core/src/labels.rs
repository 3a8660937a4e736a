//! Relevance labels shared by gold standards, predictions and judgments.

use alloc::collections::BTreeMap;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::NodeId;

/// Relevance of a paragraph for one process node.
///
/// The ordering is the strength ordering used by propagation closure:
/// `Irrelevant < Informative < Compliance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceType {
    #[default]
    Irrelevant,
    /// Related to the process without requiring an organizational action.
    Informative,
    /// Describes an action the organization must take to be compliant.
    Compliance,
}

impl RelevanceType {
    pub fn is_relevant(self) -> bool {
        self != RelevanceType::Irrelevant
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceType::Irrelevant => "irrelevant",
            RelevanceType::Informative => "informative",
            RelevanceType::Compliance => "compliance",
        }
    }
}

impl fmt::Display for RelevanceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relevance type {0:?}")]
pub struct UnknownRelevanceType(pub alloc::string::String);

impl FromStr for RelevanceType {
    type Err = UnknownRelevanceType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "irrelevant" => Ok(RelevanceType::Irrelevant),
            "informative" => Ok(RelevanceType::Informative),
            "compliance" => Ok(RelevanceType::Compliance),
            _ => Err(UnknownRelevanceType(s.into())),
        }
    }
}

/// Process hierarchy level a relevance judgment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Level {
    /// The whole process.
    L1,
    /// A sub-process.
    L2,
    /// A task or throwing event.
    L3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::L1, Level::L2, Level::L3];

    pub fn number(self) -> u8 {
        match self {
            Level::L1 => 1,
            Level::L2 => 2,
            Level::L3 => 3,
        }
    }
}

impl TryFrom<u8> for Level {
    type Error = alloc::string::String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Level::L1),
            2 => Ok(Level::L2),
            3 => Ok(Level::L3),
            _ => Err(alloc::format!("level must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l.number()
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Per-level labels of one paragraph. Nodes missing from `level2`/`level3`
/// are irrelevant.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParagraphLabels {
    #[serde(default)]
    pub level1: RelevanceType,
    #[serde(default)]
    pub level2: BTreeMap<NodeId, RelevanceType>,
    #[serde(default)]
    pub level3: BTreeMap<NodeId, RelevanceType>,
}

impl ParagraphLabels {
    pub fn irrelevant() -> Self {
        Self::default()
    }

    /// Label for `node` at `level`; the process node itself for L1.
    pub fn get(&self, level: Level, node: &str) -> RelevanceType {
        match level {
            Level::L1 => self.level1,
            Level::L2 => self.level2.get(node).copied().unwrap_or_default(),
            Level::L3 => self.level3.get(node).copied().unwrap_or_default(),
        }
    }

    pub fn set(&mut self, level: Level, node: &NodeId, value: RelevanceType) {
        match level {
            Level::L1 => self.level1 = value,
            Level::L2 => {
                self.level2.insert(node.clone(), value);
            }
            Level::L3 => {
                self.level3.insert(node.clone(), value);
            }
        }
    }

    /// True when any node at `level` carries a relevant label.
    pub fn any_relevant(&self, level: Level) -> bool {
        match level {
            Level::L1 => self.level1.is_relevant(),
            Level::L2 => self.level2.values().any(|t| t.is_relevant()),
            Level::L3 => self.level3.values().any(|t| t.is_relevant()),
        }
    }

    /// Drops explicit `irrelevant` entries so equal label sets compare equal.
    pub fn compact(&mut self) {
        self.level2.retain(|_, t| t.is_relevant());
        self.level3.retain(|_, t| t.is_relevant());
    }
}
