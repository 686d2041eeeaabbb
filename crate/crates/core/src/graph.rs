//! Projects and their versioned idea graph.
//!
//! A project holds a forest of [`IdeaNode`]s. Extending a node creates a child
//! that starts with a copy of the parent's seven section drafts; from then on
//! the two evolve independently. Refinement children continue the same idea,
//! branch children fork a variation of it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::section::{Section, SectionMap};

/// Schema version written into every project and project file.
pub const CURRENT_SCHEMA_VERSION: u32 = 1;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Uuid);

        impl $name {
            pub fn new() -> Self {
                Self(Uuid::new_v4())
            }

            pub fn as_uuid(&self) -> Uuid {
                self.0
            }
        }

        impl Default for $name {
            fn default() -> Self {
                Self::new()
            }
        }

        impl From<Uuid> for $name {
            fn from(uuid: Uuid) -> Self {
                Self(uuid)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl FromStr for $name {
            type Err = uuid::Error;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Uuid::parse_str(s).map(Self)
            }
        }
    };
}

id_newtype!(ProjectId);
id_newtype!(NodeId);

/// Canvas coordinates of a card. Unitless; must be finite.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftStatus {
    Empty,
    InProgress,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDraft {
    pub content: String,
    pub status: DraftStatus,
    pub last_modified: DateTime<Utc>,
}

impl SectionDraft {
    pub fn empty(now: DateTime<Utc>) -> Self {
        Self {
            content: String::new(),
            status: DraftStatus::Empty,
            last_modified: now,
        }
    }

    /// Whether `(status, content)` is one of the three legal combinations.
    pub fn is_consistent(&self) -> bool {
        match self.status {
            DraftStatus::Empty => self.content.is_empty(),
            DraftStatus::InProgress | DraftStatus::Done => !self.content.is_empty(),
        }
    }

    fn apply_edit(&mut self, content: String, now: DateTime<Utc>) {
        self.status = match (self.status, content.is_empty()) {
            (_, true) => DraftStatus::Empty,
            (DraftStatus::Done, false) => DraftStatus::Done,
            (_, false) => DraftStatus::InProgress,
        };
        self.content = content;
        self.last_modified = now;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    Root,
    /// Horizontal extension: incremental refinement of the same idea.
    Refinement,
    /// Vertical extension: a conceptual branch from the same origin.
    Branch,
}

impl FromStr for ExtensionKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "root" => Ok(ExtensionKind::Root),
            "refinement" => Ok(ExtensionKind::Refinement),
            "branch" => Ok(ExtensionKind::Branch),
            _ => Err(GraphError::InvalidKind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Assistant,
    ReflectionQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
    pub timestamp: DateTime<Utc>,
}

impl ChatMessage {
    /// Returns `None` for empty content.
    pub fn new(role: ChatRole, content: impl Into<String>, timestamp: DateTime<Utc>) -> Option<Self> {
        let content = content.into();
        (!content.is_empty()).then_some(Self {
            role,
            content,
            timestamp,
        })
    }
}

/// One idea card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeaNode {
    pub id: NodeId,
    pub parent_id: Option<NodeId>,
    pub extension_kind: ExtensionKind,
    pub sections: SectionMap<SectionDraft>,
    pub meta_reflection: Option<String>,
    pub chat_threads: SectionMap<Vec<ChatMessage>>,
    pub meta_thread: Vec<ChatMessage>,
    pub position: Position,
    pub created_at: DateTime<Utc>,
}

impl IdeaNode {
    pub fn is_root(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn completion_summary(&self) -> CompletionSummary {
        let sections = self.sections.map(|_, draft| draft.status);
        let done_count = sections
            .iter()
            .filter(|(_, status)| **status == DraftStatus::Done)
            .count();
        CompletionSummary {
            sections,
            done_count,
        }
    }
}

/// To-do view of a node: per-section status plus the number of finished sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub sections: SectionMap<DraftStatus>,
    pub done_count: usize,
}

/// Children of a node, partitioned by how they were extended.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Children {
    /// Always empty: a root never has a parent.
    pub root: Vec<NodeId>,
    pub refinement: Vec<NodeId>,
    pub branch: Vec<NodeId>,
}

impl Children {
    pub fn bucket(&self, kind: ExtensionKind) -> &[NodeId] {
        match kind {
            ExtensionKind::Root => &self.root,
            ExtensionKind::Refinement => &self.refinement,
            ExtensionKind::Branch => &self.branch,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty() && self.refinement.is_empty() && self.branch.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Removed,
    Modified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionChange {
    pub section: Section,
    pub kind: ChangeKind,
    /// Full section text in the older node.
    pub before: String,
    /// Full section text in the newer node.
    pub after: String,
}

/// Whole-section differences between an ancestor and one of its descendants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub from_node: NodeId,
    pub to_node: NodeId,
    /// At most one entry per section, in canonical section order.
    pub changes: Vec<SectionChange>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn sections(&self) -> BTreeSet<Section> {
        self.changes.iter().map(|change| change.section).collect()
    }
}

fn classify_change(before: &str, after: &str) -> Option<ChangeKind> {
    match (before.is_empty(), after.is_empty()) {
        (true, false) => Some(ChangeKind::Added),
        (false, true) => Some(ChangeKind::Removed),
        (false, false) if before != after => Some(ChangeKind::Modified),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("project title must not be empty")]
    EmptyTitle,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("extension kind must be refinement or branch when a parent is given, and root otherwise")]
    InvalidKind,
    #[error("section {0} is empty and cannot be marked done")]
    EmptySectionCannotBeDone(Section),
    #[error("node {from} is not an ancestor of node {to}")]
    NotOnSameLineage { from: NodeId, to: NodeId },
    #[error("node {0} has children and cannot be deleted")]
    NodeHasChildren(NodeId),
    #[error("canvas position must be finite")]
    InvalidPosition,
}

/// A violated structural invariant found by [`Project::validate`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntegrityError {
    #[error("project title is empty")]
    EmptyTitle,
    #[error("project schema version {found} does not match {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("node stored under key {key} carries id {id}")]
    KeyMismatch { key: NodeId, id: NodeId },
    #[error("node {node} references missing parent {parent}")]
    DanglingParent { node: NodeId, parent: NodeId },
    #[error("node {0} has an extension kind inconsistent with its parent link")]
    KindMismatch(NodeId),
    #[error("parent links starting at node {0} form a cycle")]
    Cycle(NodeId),
    #[error("node {node} section {section} has status inconsistent with its content")]
    DraftState { node: NodeId, section: Section },
    #[error("node {0} contains an empty chat message")]
    EmptyMessage(NodeId),
    #[error("node {0} has a non-finite position")]
    Position(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: ProjectId,
    pub title: String,
    pub topic: String,
    pub nodes: BTreeMap<NodeId, IdeaNode>,
    pub created_at: DateTime<Utc>,
    pub schema_version: u32,
}

impl Project {
    /// Creates an empty project. The topic is free text and may be empty.
    pub fn new(title: impl Into<String>, topic: impl Into<String>) -> Result<Self, GraphError> {
        let title = title.into();
        if title.trim().is_empty() {
            return Err(GraphError::EmptyTitle);
        }
        Ok(Self {
            id: ProjectId::new(),
            title,
            topic: topic.into(),
            nodes: BTreeMap::new(),
            created_at: Utc::now(),
            schema_version: CURRENT_SCHEMA_VERSION,
        })
    }

    pub fn node(&self, id: NodeId) -> Result<&IdeaNode, GraphError> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut IdeaNode, GraphError> {
        self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))
    }

    pub fn roots(&self) -> impl Iterator<Item = &IdeaNode> {
        self.nodes.values().filter(|node| node.is_root())
    }

    pub fn create_root_node(&mut self, position: Position) -> Result<IdeaNode, GraphError> {
        if !position.is_finite() {
            return Err(GraphError::InvalidPosition);
        }
        let now = Utc::now();
        let node = IdeaNode {
            id: NodeId::new(),
            parent_id: None,
            extension_kind: ExtensionKind::Root,
            sections: SectionMap::from_fn(|_| SectionDraft::empty(now)),
            meta_reflection: None,
            chat_threads: SectionMap::default(),
            meta_thread: Vec::new(),
            position,
            created_at: now,
        };
        self.nodes.insert(node.id, node.clone());
        Ok(node)
    }

    /// Creates a child of `source` carrying a copy of its section drafts.
    ///
    /// Chat threads and the meta-reflection are not inherited.
    pub fn extend_node(
        &mut self,
        source: NodeId,
        kind: ExtensionKind,
        position: Position,
    ) -> Result<IdeaNode, GraphError> {
        let parent = self.node(source)?;
        if kind == ExtensionKind::Root {
            return Err(GraphError::InvalidKind);
        }
        if !position.is_finite() {
            return Err(GraphError::InvalidPosition);
        }
        let now = Utc::now();
        let node = IdeaNode {
            id: NodeId::new(),
            parent_id: Some(source),
            extension_kind: kind,
            sections: parent.sections.map(|_, draft| SectionDraft {
                content: draft.content.clone(),
                status: draft.status,
                last_modified: now,
            }),
            meta_reflection: None,
            chat_threads: SectionMap::default(),
            meta_thread: Vec::new(),
            position,
            created_at: now,
        };
        self.nodes.insert(node.id, node.clone());
        Ok(node)
    }

    /// Replaces a section's text. An edit to a `Done` section keeps it `Done`
    /// unless the text becomes empty.
    pub fn edit_section(
        &mut self,
        node: NodeId,
        section: Section,
        content: impl Into<String>,
    ) -> Result<SectionDraft, GraphError> {
        let draft = &mut self.node_mut(node)?.sections[section];
        draft.apply_edit(content.into(), Utc::now());
        Ok(draft.clone())
    }

    pub fn set_section_done(
        &mut self,
        node: NodeId,
        section: Section,
        done: bool,
    ) -> Result<SectionDraft, GraphError> {
        let draft = &mut self.node_mut(node)?.sections[section];
        if draft.content.is_empty() {
            if done {
                return Err(GraphError::EmptySectionCannotBeDone(section));
            }
            return Ok(draft.clone());
        }
        let status = if done {
            DraftStatus::Done
        } else {
            DraftStatus::InProgress
        };
        if draft.status != status {
            draft.status = status;
            draft.last_modified = Utc::now();
        }
        Ok(draft.clone())
    }

    pub fn completion_summary(&self, node: NodeId) -> Result<CompletionSummary, GraphError> {
        Ok(self.node(node)?.completion_summary())
    }

    /// Node ids from the root down to `node`, inclusive.
    pub fn lineage(&self, node: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let mut current = self.node(node)?;
        let mut path = vec![current.id];
        // Bounded so a corrupted graph cannot loop forever.
        for _ in 0..self.nodes.len() {
            let Some(parent) = current.parent_id else {
                break;
            };
            current = self.node(parent)?;
            path.push(current.id);
        }
        path.reverse();
        Ok(path)
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, node: NodeId) -> Result<bool, GraphError> {
        self.node(ancestor)?;
        Ok(self.lineage(node)?.contains(&ancestor))
    }

    /// Section-level differences from `from` to `to`, where `from` must be `to`
    /// itself or one of its ancestors.
    pub fn diff_nodes(&self, from: NodeId, to: NodeId) -> Result<ChangeSet, GraphError> {
        let older = self.node(from)?;
        let newer = self.node(to)?;
        if !self.is_ancestor_or_self(from, to)? {
            return Err(GraphError::NotOnSameLineage { from, to });
        }
        let changes = Section::ALL
            .into_iter()
            .filter_map(|section| {
                let before = &older.sections[section].content;
                let after = &newer.sections[section].content;
                classify_change(before, after).map(|kind| SectionChange {
                    section,
                    kind,
                    before: before.clone(),
                    after: after.clone(),
                })
            })
            .collect();
        Ok(ChangeSet {
            from_node: from,
            to_node: to,
            changes,
        })
    }

    /// Direct children of `node`, oldest first within each bucket.
    pub fn list_children(&self, node: NodeId) -> Result<Children, GraphError> {
        self.node(node)?;
        let mut kids: Vec<&IdeaNode> = self
            .nodes
            .values()
            .filter(|candidate| candidate.parent_id == Some(node))
            .collect();
        kids.sort_by_key(|child| (child.created_at, child.id));
        let mut children = Children::default();
        for child in kids {
            match child.extension_kind {
                ExtensionKind::Refinement => children.refinement.push(child.id),
                ExtensionKind::Branch => children.branch.push(child.id),
                ExtensionKind::Root => children.root.push(child.id),
            }
        }
        Ok(children)
    }

    pub fn move_node(&mut self, node: NodeId, position: Position) -> Result<IdeaNode, GraphError> {
        if !position.is_finite() {
            return Err(GraphError::InvalidPosition);
        }
        let node = self.node_mut(node)?;
        node.position = position;
        Ok(node.clone())
    }

    /// Removes a node that has no children.
    pub fn delete_leaf(&mut self, node: NodeId) -> Result<IdeaNode, GraphError> {
        self.node(node)?;
        if self.nodes.values().any(|other| other.parent_id == Some(node)) {
            return Err(GraphError::NodeHasChildren(node));
        }
        Ok(self.nodes.remove(&node).expect("presence checked"))
    }

    /// Checks every structural invariant of the project.
    pub fn validate(&self) -> Result<(), IntegrityError> {
        if self.title.trim().is_empty() {
            return Err(IntegrityError::EmptyTitle);
        }
        if self.schema_version != CURRENT_SCHEMA_VERSION {
            return Err(IntegrityError::SchemaVersion {
                found: self.schema_version,
                expected: CURRENT_SCHEMA_VERSION,
            });
        }
        for (key, node) in &self.nodes {
            if *key != node.id {
                return Err(IntegrityError::KeyMismatch {
                    key: *key,
                    id: node.id,
                });
            }
            match node.parent_id {
                None if node.extension_kind != ExtensionKind::Root => {
                    return Err(IntegrityError::KindMismatch(node.id))
                }
                Some(_) if node.extension_kind == ExtensionKind::Root => {
                    return Err(IntegrityError::KindMismatch(node.id))
                }
                Some(parent) if !self.nodes.contains_key(&parent) => {
                    return Err(IntegrityError::DanglingParent {
                        node: node.id,
                        parent,
                    })
                }
                _ => {}
            }
            if let Some((section, _)) = node.sections.iter().find(|(_, d)| !d.is_consistent()) {
                return Err(IntegrityError::DraftState {
                    node: node.id,
                    section,
                });
            }
            let threads = node.chat_threads.iter().flat_map(|(_, thread)| thread.iter());
            if threads
                .chain(node.meta_thread.iter())
                .any(|message| message.content.is_empty())
            {
                return Err(IntegrityError::EmptyMessage(node.id));
            }
            if !node.position.is_finite() {
                return Err(IntegrityError::Position(node.id));
            }
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<(), IntegrityError> {
        // Nodes already proven to reach a root.
        let mut grounded: BTreeSet<NodeId> = BTreeSet::new();
        for start in self.nodes.keys() {
            let mut trail = Vec::new();
            let mut on_trail = BTreeSet::new();
            let mut current = Some(*start);
            while let Some(id) = current {
                if grounded.contains(&id) {
                    break;
                }
                if !on_trail.insert(id) {
                    return Err(IntegrityError::Cycle(*start));
                }
                trail.push(id);
                current = self.nodes.get(&id).and_then(|node| node.parent_id);
            }
            grounded.extend(trail);
        }
        Ok(())
    }
}
