use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::section::Section;

use super::prompt::{find_placeholders, Placeholder};

const DEFAULT_AGENTS_TOML: &str = include_str!("../../config/agents.toml");

/// The nine agents: one per business-plan section plus the two reflective roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRoleName {
    UserPainPoints,
    MarketAnalysis,
    ProductOverview,
    CompetitiveAnalysis,
    FeasibilityAnalysis,
    FundingPlan,
    Team,
    Reflection,
    MetaReflection,
}

impl AgentRoleName {
    pub const ALL: [AgentRoleName; 9] = [
        AgentRoleName::UserPainPoints,
        AgentRoleName::MarketAnalysis,
        AgentRoleName::ProductOverview,
        AgentRoleName::CompetitiveAnalysis,
        AgentRoleName::FeasibilityAnalysis,
        AgentRoleName::FundingPlan,
        AgentRoleName::Team,
        AgentRoleName::Reflection,
        AgentRoleName::MetaReflection,
    ];

    pub fn for_section(section: Section) -> Self {
        match section {
            Section::UserPainPoints => AgentRoleName::UserPainPoints,
            Section::MarketAnalysis => AgentRoleName::MarketAnalysis,
            Section::ProductOverview => AgentRoleName::ProductOverview,
            Section::CompetitiveAnalysis => AgentRoleName::CompetitiveAnalysis,
            Section::FeasibilityAnalysis => AgentRoleName::FeasibilityAnalysis,
            Section::FundingPlan => AgentRoleName::FundingPlan,
            Section::Team => AgentRoleName::Team,
        }
    }

    pub fn section(self) -> Option<Section> {
        Some(match self {
            AgentRoleName::UserPainPoints => Section::UserPainPoints,
            AgentRoleName::MarketAnalysis => Section::MarketAnalysis,
            AgentRoleName::ProductOverview => Section::ProductOverview,
            AgentRoleName::CompetitiveAnalysis => Section::CompetitiveAnalysis,
            AgentRoleName::FeasibilityAnalysis => Section::FeasibilityAnalysis,
            AgentRoleName::FundingPlan => Section::FundingPlan,
            AgentRoleName::Team => Section::Team,
            AgentRoleName::Reflection | AgentRoleName::MetaReflection => return None,
        })
    }

    pub fn tag(self) -> &'static str {
        match self {
            AgentRoleName::Reflection => "reflection",
            AgentRoleName::MetaReflection => "meta_reflection",
            other => other.section().expect("content role").tag(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgentRoleName::Reflection => "Reflection",
            AgentRoleName::MetaReflection => "Meta-Reflection",
            other => other.section().expect("content role").label(),
        }
    }

    /// The role's focus sentence. Every template for the role must contain it.
    pub fn directive(self) -> &'static str {
        match self {
            AgentRoleName::UserPainPoints => "Analyze and identify the target users’ core pain points, their current solutions, and deeper unmet needs in real contexts.",
            AgentRoleName::MarketAnalysis => "Discuss market size, growth trends, segmentation, and external drivers that shape the business landscape.",
            AgentRoleName::ProductOverview => "Define the product’s value proposition, key features, use cases, and how it addresses user needs.",
            AgentRoleName::CompetitiveAnalysis => "Evaluate main competitors, alternatives, and differentiation strategy to build a sustainable advantage.",
            AgentRoleName::FeasibilityAnalysis => "Assess technical, operational, and financial feasibility, including risks and implementation timeline.",
            AgentRoleName::FundingPlan => "Design a realistic fundraising plan, including funding needs, investor profile, and return expectations.",
            AgentRoleName::Team => "Present team strengths, member roles, relevant experience, and future hiring or organizational plans.",
            AgentRoleName::Reflection => "Guide the user to reflect on their current reasoning and decisions by asking open-ended questions.",
            AgentRoleName::MetaReflection => "Analyze the cognitive shift between idea versions and synthesize how the new thinking evolved.",
        }
    }
}

impl fmt::Display for AgentRoleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRole {
    pub name: AgentRoleName,
    pub system_template: String,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentConfigError {
    #[error("failed to read agent config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse agent config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("agent `{0}` is defined more than once")]
    DuplicateRole(AgentRoleName),
    #[error("agent `{0}` is missing")]
    MissingRole(AgentRoleName),
    #[error("template for `{0}` is empty")]
    EmptyTemplate(AgentRoleName),
    #[error("template for `{role}` does not contain its focus sentence: {directive}")]
    MissingDirective {
        role: AgentRoleName,
        directive: &'static str,
    },
    #[error("template for `{role}` uses unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { role: AgentRoleName, name: String },
}

#[derive(Deserialize)]
struct AgentsFile {
    agent: Vec<AgentEntry>,
}

#[derive(Deserialize)]
struct AgentEntry {
    name: AgentRoleName,
    template: String,
}

/// The nine role templates, validated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentRegistry {
    roles: [AgentRole; 9],
}

impl AgentRegistry {
    pub fn from_toml_str(text: &str) -> Result<Self, AgentConfigError> {
        let file: AgentsFile = toml::from_str(text)?;
        let mut slots: [Option<String>; 9] = Default::default();
        for entry in file.agent {
            let slot = &mut slots[entry.name as usize];
            if slot.is_some() {
                return Err(AgentConfigError::DuplicateRole(entry.name));
            }
            *slot = Some(entry.template);
        }
        let mut roles = Vec::with_capacity(9);
        for name in AgentRoleName::ALL {
            let template = slots[name as usize]
                .take()
                .ok_or(AgentConfigError::MissingRole(name))?;
            roles.push(AgentRole::checked(name, template)?);
        }
        Ok(Self {
            roles: roles.try_into().expect("nine roles"),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, AgentConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn role(&self, name: AgentRoleName) -> &AgentRole {
        &self.roles[name as usize]
    }

    /// The section's dedicated agent. Total and deterministic.
    pub fn resolve(&self, section: Section) -> &AgentRole {
        self.role(AgentRoleName::for_section(section))
    }

    pub fn roles(&self) -> &[AgentRole] {
        &self.roles
    }
}

impl Default for AgentRegistry {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_AGENTS_TOML).expect("bundled agent config is valid")
    }
}

impl AgentRole {
    fn checked(name: AgentRoleName, template: String) -> Result<Self, AgentConfigError> {
        let template = template.trim().to_string();
        if template.is_empty() {
            return Err(AgentConfigError::EmptyTemplate(name));
        }
        if !template.contains(name.directive()) {
            return Err(AgentConfigError::MissingDirective {
                role: name,
                directive: name.directive(),
            });
        }
        let unknown: BTreeSet<String> = find_placeholders(&template)
            .into_iter()
            .filter(|(_, name)| Placeholder::from_name(name).is_none())
            .map(|(_, name)| name.to_string())
            .collect();
        if let Some(placeholder) = unknown.into_iter().next() {
            return Err(AgentConfigError::UnknownPlaceholder {
                role: name,
                name: placeholder,
            });
        }
        Ok(Self {
            name,
            system_template: template,
        })
    }
}
