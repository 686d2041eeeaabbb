//! Template substitution and the digests fed into agent prompts.

use crate::graph::{ChangeKind, ChangeSet, IdeaNode};
use crate::section::Section;

pub const NOT_YET_WRITTEN: &str = "(not yet written)";
pub const NO_SECTIONS_WRITTEN: &str = "(no sections written yet)";
pub const NO_TOPIC: &str = "(no topic chosen)";
pub const NO_CHANGESET: &str = "(no earlier version to compare against)";
pub const NO_CHANGES: &str = "No section changed since the previous version.";
pub const TRUNCATION_MARKER: &str = " [… truncated]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placeholder {
    Topic,
    SectionContent,
    AllSectionsDigest,
    ChangesetDigest,
}

impl Placeholder {
    pub const ALL: [Placeholder; 4] = [
        Placeholder::Topic,
        Placeholder::SectionContent,
        Placeholder::AllSectionsDigest,
        Placeholder::ChangesetDigest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Topic => "topic",
            Placeholder::SectionContent => "section_content",
            Placeholder::AllSectionsDigest => "all_sections_digest",
            Placeholder::ChangesetDigest => "changeset_digest",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// `{name}` occurrences where `name` is a lowercase identifier, with byte offsets.
pub(crate) fn find_placeholders(template: &str) -> Vec<(usize, &str)> {
    let bytes = template.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_lowercase() || bytes[end] == b'_') {
                end += 1;
            }
            if end > start && end < bytes.len() && bytes[end] == b'}' {
                found.push((i, &template[start..end]));
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

/// Values substituted into a role template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    pub topic: String,
    pub section_content: String,
    pub all_sections_digest: String,
    pub changeset_digest: String,
}

impl PromptContext {
    fn value(&self, placeholder: Placeholder) -> &str {
        match placeholder {
            Placeholder::Topic => &self.topic,
            Placeholder::SectionContent => &self.section_content,
            Placeholder::AllSectionsDigest => &self.all_sections_digest,
            Placeholder::ChangesetDigest => &self.changeset_digest,
        }
    }
}

/// Single-pass substitution: inserted values are never re-scanned, so text
/// typed by the user cannot trigger further substitution.
pub fn render_template(template: &str, context: &PromptContext) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut cursor = 0;
    for (offset, name) in find_placeholders(template) {
        let Some(placeholder) = Placeholder::from_name(name) else {
            continue;
        };
        out.push_str(&template[cursor..offset]);
        out.push_str(context.value(placeholder));
        cursor = offset + name.len() + 2;
    }
    out.push_str(&template[cursor..]);
    out
}

/// Keeps the first `budget` characters, marking the cut.
pub fn truncate_chars(text: &str, budget: usize) -> String {
    match text.char_indices().nth(budget) {
        Some((byte_index, _)) => format!("{}{TRUNCATION_MARKER}", &text[..byte_index]),
        None => text.to_string(),
    }
}

pub fn topic_or_placeholder(topic: &str) -> String {
    if topic.trim().is_empty() {
        NO_TOPIC.to_string()
    } else {
        topic.to_string()
    }
}

pub fn section_content_or_placeholder(node: &IdeaNode, section: Section) -> String {
    let content = &node.sections[section].content;
    if content.is_empty() {
        NOT_YET_WRITTEN.to_string()
    } else {
        content.clone()
    }
}

/// Non-empty sections in canonical order, each cut to `budget` characters.
pub fn all_sections_digest(node: &IdeaNode, budget: usize) -> String {
    let parts: Vec<String> = node
        .sections
        .iter()
        .filter(|(_, draft)| !draft.content.is_empty())
        .map(|(section, draft)| {
            format!("### {}\n{}", section.label(), truncate_chars(&draft.content, budget))
        })
        .collect();
    if parts.is_empty() {
        NO_SECTIONS_WRITTEN.to_string()
    } else {
        parts.join("\n\n")
    }
}

fn one_line_excerpt(text: &str, budget: usize) -> String {
    if text.is_empty() {
        return "(empty)".to_string();
    }
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    truncate_chars(&collapsed, budget)
}

fn change_word(kind: ChangeKind) -> &'static str {
    match kind {
        ChangeKind::Added => "added",
        ChangeKind::Removed => "removed",
        ChangeKind::Modified => "modified",
    }
}

/// One block per changed section:
///
/// ```text
/// * Product Overview [modified]
///   before: ...
///   after: ...
/// ```
///
/// Excerpts are collapsed to a single line so the `* ` prefix only ever
/// starts a section entry.
pub fn changeset_digest(changes: &ChangeSet, budget: usize) -> String {
    if changes.is_empty() {
        return NO_CHANGES.to_string();
    }
    let mut out = format!(
        "{} section(s) changed since the previous version:",
        changes.changes.len()
    );
    for change in &changes.changes {
        out.push_str(&format!(
            "\n* {} [{}]\n  before: {}\n  after: {}",
            change.section.label(),
            change_word(change.kind),
            one_line_excerpt(&change.before, budget),
            one_line_excerpt(&change.after, budget),
        ));
    }
    out
}
