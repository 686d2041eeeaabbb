//! Project files, the topic catalog and Markdown export.
//!
//! A project is stored as one self-contained UTF-8 JSON document
//! (`<project id>.meflex.json`). Writes go to a temporary file in the same
//! directory which is then renamed over the destination.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::agents::prompt::NOT_YET_WRITTEN;
use crate::graph::{ExtensionKind, GraphError, NodeId, Project, ProjectId, CURRENT_SCHEMA_VERSION};

pub const PROJECT_FILE_SUFFIX: &str = ".meflex.json";

const DEFAULT_TOPICS_TOML: &str = include_str!("../config/topics.toml");

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt project file: {0}")]
    CorruptFile(String),
    #[error("unsupported schema version {found} (this build reads up to {supported})")]
    UnsupportedSchemaVersion { found: u64, supported: u32 },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A project file that could not be read, with the reason.
pub type LoadFailure = (PathBuf, StoreError);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub schema_version: u32,
    pub project: Project,
    pub saved_at: DateTime<Utc>,
}

/// What was written by a save.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SavedFile {
    pub path: PathBuf,
    pub schema_version: u32,
    pub saved_at: DateTime<Utc>,
    pub bytes: usize,
}

pub fn save_project(project: &Project, destination: &Path) -> Result<SavedFile, StoreError> {
    save_project_with_hook(project, destination, |_| Ok(()))
}

/// Save with a hook that runs after the temporary file is complete and before
/// it replaces the destination. A hook error aborts the save.
pub(crate) fn save_project_with_hook(
    project: &Project,
    destination: &Path,
    before_rename: impl FnOnce(&Path) -> std::io::Result<()>,
) -> Result<SavedFile, StoreError> {
    let saved_at = Utc::now();
    let file = ProjectFile {
        schema_version: CURRENT_SCHEMA_VERSION,
        project: project.clone(),
        saved_at,
    };
    let json = serde_json::to_vec_pretty(&file).expect("project serialization is infallible");

    let dir = match destination.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let mut temp = NamedTempFile::new_in(dir).map_err(|err| StoreError::io(destination, err))?;
    temp.write_all(&json)
        .and_then(|_| temp.as_file().sync_all())
        .map_err(|err| StoreError::io(temp.path(), err))?;
    before_rename(temp.path()).map_err(|err| StoreError::io(destination, err))?;
    temp.persist(destination)
        .map_err(|err| StoreError::io(destination, err.error))?;

    Ok(SavedFile {
        path: destination.to_path_buf(),
        schema_version: CURRENT_SCHEMA_VERSION,
        saved_at,
        bytes: json.len(),
    })
}

/// Reads a project file and re-checks every graph invariant.
pub fn load_project(source: &Path) -> Result<Project, StoreError> {
    let bytes = fs::read(source).map_err(|err| StoreError::io(source, err))?;
    parse_project_file(&bytes).map(|file| file.project)
}

pub fn parse_project_file(bytes: &[u8]) -> Result<ProjectFile, StoreError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|err| StoreError::CorruptFile(err.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| StoreError::CorruptFile("missing schema_version".into()))?;
    if version > u64::from(CURRENT_SCHEMA_VERSION) {
        return Err(StoreError::UnsupportedSchemaVersion {
            found: version,
            supported: CURRENT_SCHEMA_VERSION,
        });
    }
    if version < u64::from(CURRENT_SCHEMA_VERSION) {
        // No older format has ever been written.
        return Err(StoreError::CorruptFile(format!("unknown schema_version {version}")));
    }
    let file: ProjectFile =
        serde_json::from_value(value).map_err(|err| StoreError::CorruptFile(err.to_string()))?;
    file.project
        .validate()
        .map_err(|err| StoreError::CorruptFile(err.to_string()))?;
    Ok(file)
}

/// A directory of project files with saves serialized per project.
#[derive(Debug)]
pub struct ProjectStore {
    dir: PathBuf,
    locks: Mutex<HashMap<ProjectId, Arc<Mutex<()>>>>,
}

impl ProjectStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|err| StoreError::io(&dir, err))?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: ProjectId) -> PathBuf {
        self.dir.join(format!("{id}{PROJECT_FILE_SUFFIX}"))
    }

    fn lock_for(&self, id: ProjectId) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id).or_default().clone()
    }

    pub fn save(&self, project: &Project) -> Result<SavedFile, StoreError> {
        let lock = self.lock_for(project.id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        save_project(project, &self.path_for(project.id))
    }

    pub fn load(&self, id: ProjectId) -> Result<Project, StoreError> {
        load_project(&self.path_for(id))
    }

    /// Loads every `*.meflex.json` in the directory. Files that fail to load
    /// are returned separately rather than aborting the scan.
    pub fn load_all(&self) -> Result<(Vec<Project>, Vec<LoadFailure>), StoreError> {
        let mut projects = Vec::new();
        let mut failures = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|err| StoreError::io(&self.dir, err))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|path| {
                path.file_name()
                    .and_then(|name| name.to_str())
                    .is_some_and(|name| name.ends_with(PROJECT_FILE_SUFFIX))
            })
            .collect();
        paths.sort();
        for path in paths {
            match load_project(&path) {
                Ok(project) => projects.push(project),
                Err(err) => failures.push((path, err)),
            }
        }
        Ok((projects, failures))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TopicCatalogError {
    #[error("failed to read topic catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse topic catalog: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("topic labels must not be empty")]
    EmptyLabel,
    #[error("duplicate topic label `{0}`")]
    Duplicate(String),
}

/// Ordered list of suggested project topics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCatalog {
    topics: Vec<String>,
}

impl TopicCatalog {
    pub fn new(topics: Vec<String>) -> Result<Self, TopicCatalogError> {
        let mut seen = HashSet::new();
        for topic in &topics {
            if topic.trim().is_empty() {
                return Err(TopicCatalogError::EmptyLabel);
            }
            if !seen.insert(topic.as_str()) {
                return Err(TopicCatalogError::Duplicate(topic.clone()));
            }
        }
        Ok(Self { topics })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TopicCatalogError> {
        #[derive(Deserialize)]
        struct File {
            topics: Vec<String>,
        }
        let file: File = toml::from_str(text)?;
        Self::new(file.topics)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TopicCatalogError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn contains(&self, topic: &str) -> bool {
        self.topics.iter().any(|t| t == topic)
    }
}

impl Default for TopicCatalog {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_TOPICS_TOML).expect("bundled topic catalog is valid")
    }
}

/// Renders one card as a Markdown business plan: title, topic, the seven
/// sections in canonical order, then the meta-reflection if there is one.
pub fn export_markdown(project: &Project, node_id: NodeId) -> Result<String, GraphError> {
    let node = project.node(node_id)?;
    let mut doc = String::new();
    let topic = if project.topic.trim().is_empty() {
        "(none)"
    } else {
        project.topic.as_str()
    };
    let kind = match node.extension_kind {
        ExtensionKind::Root => "original idea",
        ExtensionKind::Refinement => "refinement",
        ExtensionKind::Branch => "branch",
    };
    let summary = node.completion_summary();
    let _ = writeln!(doc, "# {}\n", project.title);
    let _ = writeln!(doc, "**Topic:** {topic}\n");
    let _ = writeln!(
        doc,
        "_Idea card {} ({kind}), {}/7 sections done._\n",
        node.id, summary.done_count
    );
    for (section, draft) in node.sections.iter() {
        let body = if draft.content.is_empty() {
            NOT_YET_WRITTEN
        } else {
            draft.content.trim_end()
        };
        let _ = writeln!(doc, "## {}\n\n{body}\n", section.label());
    }
    if let Some(meta) = &node.meta_reflection {
        let _ = writeln!(doc, "## Meta-Reflection\n\n{}\n", meta.trim_end());
    }
    Ok(doc)
}
