//! Shared service state.
//!
//! Each project lives in a slot with two locks: an async writer gate that
//! serializes every mutation of that project (including the provider calls
//! inside a chat), and a short-lived `RwLock` around the data itself. Writers
//! work on a clone and swap it in on success, so readers never wait on an LLM
//! call and never see a half-applied change.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use meflex_core::{Agents, ChatProvider, Project, ProjectId, ProjectStore, TopicCatalog};
use tracing::{debug, error, info};

use crate::error::ApiError;

pub const DEFAULT_AUTOSAVE_DEBOUNCE: Duration = Duration::from_secs(2);

#[derive(Debug)]
pub struct ProjectSlot {
    writer: tokio::sync::Mutex<()>,
    data: RwLock<Project>,
}

impl ProjectSlot {
    fn new(project: Project) -> Self {
        Self {
            writer: tokio::sync::Mutex::new(()),
            data: RwLock::new(project),
        }
    }

    pub fn snapshot(&self) -> Project {
        self.data.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn read<T>(&self, f: impl FnOnce(&Project) -> T) -> T {
        f(&self.data.read().unwrap_or_else(|p| p.into_inner()))
    }

    fn replace(&self, project: Project) {
        *self.data.write().unwrap_or_else(|p| p.into_inner()) = project;
    }
}

/// Debounced background saving: each mutation restarts the project's timer and
/// the save happens once the project has been quiet for the debounce period.
#[derive(Debug)]
pub struct Autosaver {
    store: Arc<ProjectStore>,
    debounce: Duration,
    generations: Mutex<HashMap<ProjectId, u64>>,
}

impl Autosaver {
    pub fn new(store: Arc<ProjectStore>, debounce: Duration) -> Self {
        Self {
            store,
            debounce,
            generations: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Arc<ProjectStore> {
        &self.store
    }

    fn schedule(self: &Arc<Self>, slot: Arc<ProjectSlot>, id: ProjectId) {
        let generation = {
            let mut generations = self.generations.lock().unwrap_or_else(|p| p.into_inner());
            let entry = generations.entry(id).or_insert(0);
            *entry += 1;
            *entry
        };
        let saver = Arc::clone(self);
        tokio::spawn(async move {
            tokio::time::sleep(saver.debounce).await;
            let current = saver
                .generations
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .get(&id)
                .copied();
            if current != Some(generation) {
                return;
            }
            let project = slot.snapshot();
            let store = Arc::clone(&saver.store);
            match tokio::task::spawn_blocking(move || store.save(&project)).await {
                Ok(Ok(saved)) => debug!(project = %id, path = %saved.path.display(), "autosaved"),
                Ok(Err(err)) => error!(project = %id, error = %err, "autosave failed"),
                Err(err) => error!(project = %id, error = %err, "autosave task panicked"),
            }
        });
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    projects: RwLock<BTreeMap<ProjectId, Arc<ProjectSlot>>>,
    agents: Agents,
    provider: Arc<dyn ChatProvider>,
    topics: TopicCatalog,
    autosave: Option<Arc<Autosaver>>,
    auto_meta_reflection: bool,
}

pub struct AppStateBuilder {
    agents: Agents,
    provider: Arc<dyn ChatProvider>,
    topics: TopicCatalog,
    autosave: Option<Arc<Autosaver>>,
    auto_meta_reflection: bool,
    projects: Vec<Project>,
}

impl AppStateBuilder {
    pub fn agents(mut self, agents: Agents) -> Self {
        self.agents = agents;
        self
    }

    pub fn topics(mut self, topics: TopicCatalog) -> Self {
        self.topics = topics;
        self
    }

    pub fn autosave(mut self, autosaver: Autosaver) -> Self {
        self.autosave = Some(Arc::new(autosaver));
        self
    }

    /// Whether extending a node immediately requests its meta-reflection.
    pub fn auto_meta_reflection(mut self, enabled: bool) -> Self {
        self.auto_meta_reflection = enabled;
        self
    }

    pub fn projects(mut self, projects: impl IntoIterator<Item = Project>) -> Self {
        self.projects.extend(projects);
        self
    }

    pub fn build(self) -> AppState {
        let projects = self
            .projects
            .into_iter()
            .map(|project| (project.id, Arc::new(ProjectSlot::new(project))))
            .collect();
        AppState {
            inner: Arc::new(Inner {
                projects: RwLock::new(projects),
                agents: self.agents,
                provider: self.provider,
                topics: self.topics,
                autosave: self.autosave,
                auto_meta_reflection: self.auto_meta_reflection,
            }),
        }
    }
}

impl AppState {
    pub fn builder(provider: Arc<dyn ChatProvider>) -> AppStateBuilder {
        AppStateBuilder {
            agents: Agents::default(),
            provider,
            topics: TopicCatalog::default(),
            autosave: None,
            auto_meta_reflection: true,
            projects: Vec::new(),
        }
    }

    pub fn agents(&self) -> &Agents {
        &self.inner.agents
    }

    pub fn provider(&self) -> &dyn ChatProvider {
        self.inner.provider.as_ref()
    }

    pub fn topics(&self) -> &TopicCatalog {
        &self.inner.topics
    }

    pub fn auto_meta_reflection(&self) -> bool {
        self.inner.auto_meta_reflection
    }

    pub fn slot(&self, id: &str) -> Result<Arc<ProjectSlot>, ApiError> {
        let parsed: ProjectId = id.parse().map_err(|_| ApiError::unknown_project(id))?;
        self.inner
            .projects
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(&parsed)
            .cloned()
            .ok_or_else(|| ApiError::unknown_project(id))
    }

    pub fn project_snapshots(&self) -> Vec<Project> {
        let slots: Vec<Arc<ProjectSlot>> = self
            .inner
            .projects
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        slots.iter().map(|slot| slot.snapshot()).collect()
    }

    pub fn insert_project(&self, project: Project) -> Project {
        let id = project.id;
        let slot = Arc::new(ProjectSlot::new(project.clone()));
        self.inner
            .projects
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::clone(&slot));
        self.after_mutation(slot, id);
        project
    }

    /// Applies a synchronous mutation under the project's writer gate.
    pub async fn mutate<T>(
        &self,
        project_id: &str,
        f: impl FnOnce(&mut Project) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let slot = self.slot(project_id)?;
        let _gate = slot.writer.lock().await;
        let mut working = slot.snapshot();
        let value = f(&mut working)?;
        let id = working.id;
        slot.replace(working);
        self.after_mutation(slot.clone(), id);
        Ok(value)
    }

    /// Like [`AppState::mutate`] for operations that await (provider calls).
    /// The closure's `Err` discards the working copy, leaving the project untouched.
    pub async fn mutate_async<T, F, Fut>(&self, project_id: &str, f: F) -> Result<T, ApiError>
    where
        F: FnOnce(Project) -> Fut,
        Fut: Future<Output = (Project, Result<T, ApiError>)>,
    {
        let slot = self.slot(project_id)?;
        let _gate = slot.writer.lock().await;
        let (working, result) = f(slot.snapshot()).await;
        let value = result?;
        let id = working.id;
        slot.replace(working);
        self.after_mutation(slot.clone(), id);
        Ok(value)
    }

    fn after_mutation(&self, slot: Arc<ProjectSlot>, id: ProjectId) {
        if let Some(autosave) = &self.inner.autosave {
            autosave.schedule(slot, id);
        }
    }

    /// Saves every project now. Used on shutdown.
    pub fn flush(&self) -> usize {
        let Some(autosave) = &self.inner.autosave else {
            return 0;
        };
        let mut saved = 0;
        for project in self.project_snapshots() {
            match autosave.store().save(&project) {
                Ok(_) => saved += 1,
                Err(err) => error!(project = %project.id, error = %err, "final save failed"),
            }
        }
        info!(saved, "flushed projects");
        saved
    }
}
