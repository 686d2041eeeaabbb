//! Core of the Meflex idea canvas: a versioned graph of business-plan idea
//! cards, role-specific LLM agents with reflection and meta-reflection, a
//! provider abstraction over chat-completion endpoints, and JSON persistence.

pub mod agents;
pub mod graph;
pub mod llm;
pub mod section;
pub mod store;

pub use agents::{AgentError, AgentRegistry, AgentRole, AgentRoleName, AgentSettings, Agents, ChatExchange};
pub use graph::{
    ChangeKind, ChangeSet, ChatMessage, ChatRole, Children, CompletionSummary, DraftStatus,
    ExtensionKind, GraphError, IdeaNode, IntegrityError, NodeId, Position, Project, ProjectId,
    SectionChange, SectionDraft, CURRENT_SCHEMA_VERSION,
};
pub use llm::{
    ChatProvider, CompletionResult, FinishReason, HttpProvider, PromptBundle, PromptTurn,
    ProviderConfig, ProviderError, SamplingParams, ScriptStep, ScriptedProvider,
};
pub use section::{Section, SectionMap};
pub use store::{export_markdown, load_project, save_project, ProjectStore, StoreError, TopicCatalog};
