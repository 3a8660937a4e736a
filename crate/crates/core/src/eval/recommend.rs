//! Scenario-based recommendation of method combinations.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Usage {
    Low,
    High,
    LowToHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impact {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulatoryInput {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub usage: Usage,
    pub impact: Impact,
    pub dynamics: Dynamics,
    pub regulatory_input: RegulatoryInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodCombination {
    ExpertOnly,
    SotaNlpLirPlusExpert,
    GptPlusExpert,
    CrowdPlusExpert,
}

impl MethodCombination {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodCombination::ExpertOnly => "expert_only",
            MethodCombination::SotaNlpLirPlusExpert => "sota_nlp_lir_plus_expert",
            MethodCombination::GptPlusExpert => "gpt_plus_expert",
            MethodCombination::CrowdPlusExpert => "crowd_plus_expert",
        }
    }
}

impl fmt::Display for MethodCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub combination: MethodCombination,
    /// False when the profile matched no table row exactly.
    pub canonical: bool,
}

const TABLE: [(ScenarioProfile, MethodCombination); 4] = [
    (
        ScenarioProfile {
            usage: Usage::LowToHigh,
            impact: Impact::High,
            dynamics: Dynamics::Low,
            regulatory_input: RegulatoryInput::Low,
        },
        MethodCombination::ExpertOnly,
    ),
    (
        ScenarioProfile {
            usage: Usage::High,
            impact: Impact::High,
            dynamics: Dynamics::High,
            regulatory_input: RegulatoryInput::High,
        },
        MethodCombination::SotaNlpLirPlusExpert,
    ),
    (
        ScenarioProfile {
            usage: Usage::High,
            impact: Impact::Low,
            dynamics: Dynamics::High,
            regulatory_input: RegulatoryInput::High,
        },
        MethodCombination::GptPlusExpert,
    ),
    (
        ScenarioProfile {
            usage: Usage::LowToHigh,
            impact: Impact::Low,
            dynamics: Dynamics::Low,
            regulatory_input: RegulatoryInput::Low,
        },
        MethodCombination::CrowdPlusExpert,
    ),
];

/// The four canonical scenario rows in table order.
pub fn canonical_profiles() -> [(ScenarioProfile, MethodCombination); 4] {
    TABLE
}

fn usage_affinity(row: Usage, asked: Usage) -> u8 {
    if row == asked {
        2
    } else if row == Usage::LowToHigh {
        1
    } else {
        0
    }
}

/// Exact table lookup. Other profiles get the nearest row, comparing
/// impact, then dynamics, then regulatory input, then usage (a
/// `low_to_high` row partially matches `low` or `high`). Ties go to the
/// earlier row.
pub fn recommend_methods(profile: &ScenarioProfile) -> Recommendation {
    if let Some((_, c)) = TABLE.iter().find(|(p, _)| p == profile) {
        return Recommendation {
            combination: *c,
            canonical: true,
        };
    }
    let key = |p: &ScenarioProfile| {
        (
            p.impact == profile.impact,
            p.dynamics == profile.dynamics,
            p.regulatory_input == profile.regulatory_input,
            usage_affinity(p.usage, profile.usage),
        )
    };
    let mut best = &TABLE[0];
    for row in &TABLE[1..] {
        if key(&row.0) > key(&best.0) {
            best = row;
        }
    }
    Recommendation {
        combination: best.1,
        canonical: false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown value {0:?}")]
pub struct UnknownValue(pub alloc::string::String);

macro_rules! parse_level {
    ($t:ty { $($s:literal => $v:expr),* }) => {
        impl FromStr for $t {
            type Err = UnknownValue;
            fn from_str(s: &str) -> Result<Self, UnknownValue> {
                match s.trim() {
                    $($s => Ok($v),)*
                    other => Err(UnknownValue(other.into())),
                }
            }
        }
    };
}

parse_level!(Usage { "low" => Usage::Low, "high" => Usage::High, "low_to_high" => Usage::LowToHigh });
parse_level!(Impact { "low" => Impact::Low, "high" => Impact::High });
parse_level!(Dynamics { "low" => Dynamics::Low, "high" => Dynamics::High });
parse_level!(RegulatoryInput { "low" => RegulatoryInput::Low, "high" => RegulatoryInput::High });
