//! Section agents, reflection questions and meta-reflection summaries.
//!
//! Every section chat makes two provider calls: the section's own agent
//! answers, then the Reflection agent turns that answer into one open-ended
//! question. Meta-reflections summarize how a card differs from its parent
//! and can be revised through a short dialogue.

pub mod prompt;
mod roles;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::graph::{ChatMessage, ChatRole, ExtensionKind, GraphError, IdeaNode, NodeId, Project};
use crate::llm::{
    ChatProvider, CompletionResult, FinishReason, PromptBundle, PromptTurn, ProviderError,
    SamplingParams, TurnRole,
};
use crate::section::Section;

pub use roles::{AgentConfigError, AgentRegistry, AgentRole, AgentRoleName};

use prompt::{
    all_sections_digest, changeset_digest, render_template, section_content_or_placeholder,
    topic_or_placeholder, truncate_chars, PromptContext, NO_CHANGESET,
};

pub const DEFAULT_DIGEST_CHAR_BUDGET: usize = 1200;
pub const DEFAULT_LINEAGE_CAP: usize = 3;

const REVISION_NOTE: &str = "The writer wants to discuss the meta-reflection shown at the start of the conversation. \
Take their message into account and reply with the complete revised meta-reflection only, no preamble.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub sampling: SamplingParams,
    /// Per-section character budget inside digests.
    pub digest_char_budget: usize,
    /// Number of nearest ancestors described to the meta-reflection agent.
    pub lineage_cap: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            sampling: SamplingParams::default(),
            digest_char_budget: DEFAULT_DIGEST_CHAR_BUDGET,
            lineage_cap: DEFAULT_LINEAGE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("node {0} is a root and has no earlier version to evolve from")]
    RootHasNoEvolution(NodeId),
    #[error("node {0} has no meta-reflection yet")]
    NoMetaReflectionYet(NodeId),
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
}

/// Result of a section chat: the agent's answer and the follow-up question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub assistant: ChatMessage,
    pub reflection: ChatMessage,
}

#[derive(Debug, Clone, Default)]
pub struct Agents {
    registry: AgentRegistry,
    settings: AgentSettings,
}

impl Agents {
    pub fn new(registry: AgentRegistry, settings: AgentSettings) -> Self {
        Self { registry, settings }
    }

    pub fn registry(&self) -> &AgentRegistry {
        &self.registry
    }

    pub fn settings(&self) -> &AgentSettings {
        &self.settings
    }

    pub fn resolve_agent(&self, section: Section) -> &AgentRole {
        self.registry.resolve(section)
    }

    fn context(&self, project: &Project, node: &IdeaNode, section: Option<Section>) -> PromptContext {
        PromptContext {
            topic: topic_or_placeholder(&project.topic),
            section_content: match section {
                Some(section) => section_content_or_placeholder(node, section),
                None => prompt::NOT_YET_WRITTEN.to_string(),
            },
            all_sections_digest: all_sections_digest(node, self.settings.digest_char_budget),
            changeset_digest: NO_CHANGESET.to_string(),
        }
    }

    /// Prompt for a section agent: rendered template, the section's thread as
    /// history, and the new user message.
    pub fn build_section_prompt(
        &self,
        role: &AgentRole,
        project: &Project,
        node: &IdeaNode,
        section: Section,
        user_msg: &str,
    ) -> Result<PromptBundle, AgentError> {
        if user_msg.trim().is_empty() {
            return Err(AgentError::EmptyMessage);
        }
        let context = self.context(project, node, Some(section));
        Ok(PromptBundle {
            system: render_template(&role.system_template, &context),
            history: thread_history(&node.chat_threads[section]),
            user: user_msg.to_string(),
            sampling: self.settings.sampling.clone(),
        })
    }

    /// Prompt for the Reflection agent, given the exchange it should follow up on.
    pub fn build_reflection_prompt(
        &self,
        project: &Project,
        node: &IdeaNode,
        section: Section,
        user_msg: &str,
        assistant_reply: &str,
    ) -> PromptBundle {
        let role = self.registry.role(AgentRoleName::Reflection);
        let context = self.context(project, node, Some(section));
        let user = format!(
            "Section: {}\n\nThe writer said:\n{}\n\nThe {} agent replied:\n{}\n\nAsk one open-ended reflective question.",
            section.label(),
            user_msg,
            section.label(),
            assistant_reply,
        );
        PromptBundle {
            system: render_template(&role.system_template, &context),
            history: Vec::new(),
            user,
            sampling: self.settings.sampling.clone(),
        }
    }

    fn meta_system_prompt(&self, project: &Project, node: &IdeaNode) -> Result<String, AgentError> {
        let role = self.registry.role(AgentRoleName::MetaReflection);
        let mut context = self.context(project, node, None);
        if let Some(parent) = node.parent_id {
            let changes = project.diff_nodes(parent, node.id)?;
            context.changeset_digest = changeset_digest(&changes, self.settings.digest_char_budget);
        }
        Ok(render_template(&role.system_template, &context))
    }

    /// Up to `lineage_cap` nearest ancestors, nearest first.
    fn lineage_digest(&self, project: &Project, node: &IdeaNode) -> Result<String, AgentError> {
        let lineage = project.lineage(node.id)?;
        let mut lines = Vec::new();
        for (steps_back, ancestor_id) in lineage.iter().rev().skip(1).take(self.settings.lineage_cap).enumerate() {
            let ancestor = project.node(*ancestor_id)?;
            let kind = match ancestor.extension_kind {
                ExtensionKind::Root => "original idea",
                ExtensionKind::Refinement => "refinement",
                ExtensionKind::Branch => "branch",
            };
            let summary = ancestor
                .meta_reflection
                .as_deref()
                .map(|text| truncate_chars(&text.split_whitespace().collect::<Vec<_>>().join(" "), self.settings.digest_char_budget))
                .unwrap_or_else(|| "none recorded".to_string());
            lines.push(format!(
                "- {} step(s) back: {} created {}, {}/{} sections done; its meta-reflection: {}",
                steps_back + 1,
                kind,
                ancestor.created_at.format("%Y-%m-%d %H:%M UTC"),
                ancestor.completion_summary().done_count,
                Section::COUNT,
                summary,
            ));
        }
        let omitted = lineage.len().saturating_sub(1 + self.settings.lineage_cap);
        if omitted > 0 {
            lines.push(format!("- ({omitted} older version(s) omitted)"));
        }
        Ok(lines.join("\n"))
    }

    /// Prompt for a fresh meta-reflection of a non-root node.
    pub fn build_meta_reflection_prompt(
        &self,
        project: &Project,
        node_id: NodeId,
    ) -> Result<PromptBundle, AgentError> {
        let node = project.node(node_id)?;
        if node.parent_id.is_none() {
            return Err(AgentError::RootHasNoEvolution(node_id));
        }
        let kind = match node.extension_kind {
            ExtensionKind::Branch => "a branch exploring an alternative direction",
            _ => "a refinement continuing the same idea",
        };
        let user = format!(
            "This version is {kind}.\n\nEarlier versions on its path, nearest first:\n{}\n\nWrite the meta-reflection for this version.",
            self.lineage_digest(project, node)?,
        );
        Ok(PromptBundle {
            system: self.meta_system_prompt(project, node)?,
            history: Vec::new(),
            user,
            sampling: self.settings.sampling.clone(),
        })
    }

    /// Prompt for revising an existing meta-reflection through dialogue.
    pub fn build_meta_refinement_prompt(
        &self,
        project: &Project,
        node_id: NodeId,
        user_msg: &str,
    ) -> Result<PromptBundle, AgentError> {
        let node = project.node(node_id)?;
        if user_msg.trim().is_empty() {
            return Err(AgentError::EmptyMessage);
        }
        let current = node
            .meta_reflection
            .as_deref()
            .ok_or(AgentError::NoMetaReflectionYet(node_id))?;
        let mut history = vec![PromptTurn::assistant(format!("Current meta-reflection:\n{current}"))];
        history.extend(thread_history(&node.meta_thread));
        Ok(PromptBundle {
            system: format!("{}\n\n{REVISION_NOTE}", self.meta_system_prompt(project, node)?),
            history,
            user: user_msg.to_string(),
            sampling: self.settings.sampling.clone(),
        })
    }

    /// Runs the section agent and then the Reflection agent, appending
    /// `[User, Assistant, ReflectionQuestion]` to the thread only if both succeed.
    pub async fn section_chat(
        &self,
        project: &mut Project,
        node_id: NodeId,
        section: Section,
        user_msg: &str,
        provider: &dyn ChatProvider,
    ) -> Result<ChatExchange, AgentError> {
        let sent_at = Utc::now();
        let node = project.node(node_id)?;
        let role = self.resolve_agent(section);
        let bundle = self.build_section_prompt(role, project, node, section, user_msg)?;
        let reply = accept(provider.complete(&bundle).await?)?;
        let assistant_at = Utc::now();

        let reflection_bundle = self.build_reflection_prompt(project, node, section, user_msg, &reply);
        let question = accept(provider.complete(&reflection_bundle).await?)?;
        let reflection_at = Utc::now();

        let user = message(ChatRole::User, user_msg, sent_at);
        let assistant = message(ChatRole::Assistant, &reply, assistant_at);
        let reflection = message(ChatRole::ReflectionQuestion, &question, reflection_at);
        project.node_mut(node_id)?.chat_threads[section].extend([
            user,
            assistant.clone(),
            reflection.clone(),
        ]);
        Ok(ChatExchange {
            assistant,
            reflection,
        })
    }

    /// Summarizes how the node evolved from its parent and stores the result,
    /// overwriting any previous meta-reflection.
    pub async fn generate_meta_reflection(
        &self,
        project: &mut Project,
        node_id: NodeId,
        provider: &dyn ChatProvider,
    ) -> Result<String, AgentError> {
        let bundle = self.build_meta_reflection_prompt(project, node_id)?;
        let text = accept(provider.complete(&bundle).await?)?;
        project.node_mut(node_id)?.meta_reflection = Some(text.clone());
        Ok(text)
    }

    /// One revision turn on the meta-reflection; the reply becomes the new text.
    pub async fn refine_meta_reflection(
        &self,
        project: &mut Project,
        node_id: NodeId,
        user_msg: &str,
        provider: &dyn ChatProvider,
    ) -> Result<String, AgentError> {
        let sent_at = Utc::now();
        let bundle = self.build_meta_refinement_prompt(project, node_id, user_msg)?;
        let text = accept(provider.complete(&bundle).await?)?;
        let node = project.node_mut(node_id)?;
        node.meta_thread.extend([
            message(ChatRole::User, user_msg, sent_at),
            message(ChatRole::Assistant, &text, Utc::now()),
        ]);
        node.meta_reflection = Some(text.clone());
        Ok(text)
    }
}

fn message(role: ChatRole, content: &str, at: chrono::DateTime<Utc>) -> ChatMessage {
    ChatMessage::new(role, content, at).expect("content checked non-empty")
}

/// Usable text from a completion; empty or errored completions are rejected.
fn accept(result: CompletionResult) -> Result<String, ProviderError> {
    if result.finish_reason == FinishReason::Error {
        return Err(ProviderError::MalformedResponse(
            "provider reported an error finish".into(),
        ));
    }
    if result.content.trim().is_empty() {
        return Err(ProviderError::MalformedResponse("empty completion".into()));
    }
    Ok(result.content)
}

/// Maps a stored thread onto alternating user/assistant turns. A reflection
/// question is folded into the assistant turn it follows.
fn thread_history(thread: &[ChatMessage]) -> Vec<PromptTurn> {
    let mut turns: Vec<PromptTurn> = Vec::with_capacity(thread.len());
    for message in thread {
        match message.role {
            ChatRole::User => turns.push(PromptTurn::user(message.content.clone())),
            ChatRole::Assistant => turns.push(PromptTurn::assistant(message.content.clone())),
            ChatRole::ReflectionQuestion => match turns.last_mut() {
                Some(last) if last.role == TurnRole::Assistant => {
                    last.content.push_str("\n\nReflective question: ");
                    last.content.push_str(&message.content);
                }
                _ => turns.push(PromptTurn::assistant(format!(
                    "Reflective question: {}",
                    message.content
                ))),
            },
        }
    }
    turns
}
