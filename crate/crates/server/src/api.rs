//! Route table and handlers. Every handler delegates to one core operation.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use meflex_core::{
    export_markdown, AgentRoleName, Children, CompletionSummary, ExtensionKind, IdeaNode, NodeId,
    Position, Project, ProjectId, Section, SectionDraft,
};
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{ApiError, ErrorCode};
use crate::state::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/topics", get(list_topics))
        .route("/agents", get(list_agents))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{pid}", get(get_project))
        .route("/projects/{pid}/diff", get(diff_nodes))
        .route("/projects/{pid}/nodes", post(create_node))
        .route(
            "/projects/{pid}/nodes/{nid}",
            get(get_node).patch(move_node).delete(delete_node),
        )
        .route("/projects/{pid}/nodes/{nid}/children", get(list_children))
        .route("/projects/{pid}/nodes/{nid}/lineage", get(get_lineage))
        .route("/projects/{pid}/nodes/{nid}/todo", get(get_todo))
        .route("/projects/{pid}/nodes/{nid}/export", get(export_node))
        .route(
            "/projects/{pid}/nodes/{nid}/sections/{section}",
            axum::routing::patch(patch_section),
        )
        .route(
            "/projects/{pid}/nodes/{nid}/sections/{section}/chat",
            post(section_chat),
        )
        .route(
            "/projects/{pid}/nodes/{nid}/meta-reflection",
            post(generate_meta_reflection),
        )
        .route(
            "/projects/{pid}/nodes/{nid}/meta-reflection/chat",
            post(refine_meta_reflection),
        )
        .fallback(unknown_route)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

async fn unknown_route() -> ApiError {
    ApiError::new(ErrorCode::UnknownRoute, "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this endpoint")
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(value)| value)
        .map_err(|rejection| ApiError::invalid_request(rejection.body_text()))
}

fn parse_node_id(raw: &str) -> ApiResult<NodeId> {
    raw.parse().map_err(|_| ApiError::unknown_node(raw))
}

fn parse_section(raw: &str) -> ApiResult<Section> {
    raw.parse()
        .map_err(|err: meflex_core::section::UnknownSection| ApiError::new(ErrorCode::InvalidSection, err.to_string()))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok" })
}

#[derive(Serialize, Deserialize)]
pub struct TopicList {
    pub topics: Vec<String>,
}

async fn list_topics(State(state): State<AppState>) -> Json<TopicList> {
    Json(TopicList {
        topics: state.topics().topics().to_vec(),
    })
}

#[derive(Serialize, Deserialize)]
pub struct AgentInfo {
    pub name: AgentRoleName,
    pub label: String,
    pub section: Option<Section>,
    pub directive: String,
}

async fn list_agents(State(state): State<AppState>) -> Json<Vec<AgentInfo>> {
    Json(
        state
            .agents()
            .registry()
            .roles()
            .iter()
            .map(|role| AgentInfo {
                name: role.name,
                label: role.name.label().to_string(),
                section: role.name.section(),
                directive: role.name.directive().to_string(),
            })
            .collect(),
    )
}

#[derive(Deserialize)]
struct CreateProject {
    title: String,
    #[serde(default)]
    topic: String,
}

async fn create_project(
    State(state): State<AppState>,
    payload: Result<Json<CreateProject>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Project>)> {
    let request = body(payload)?;
    let project = Project::new(request.title, request.topic)?;
    Ok((StatusCode::CREATED, Json(state.insert_project(project))))
}

#[derive(Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: ProjectId,
    pub title: String,
    pub topic: String,
    pub created_at: DateTime<Utc>,
    pub node_count: usize,
}

async fn list_projects(State(state): State<AppState>) -> Json<Vec<ProjectSummary>> {
    let mut summaries: Vec<ProjectSummary> = state
        .project_snapshots()
        .into_iter()
        .map(|project| ProjectSummary {
            id: project.id,
            title: project.title,
            topic: project.topic,
            created_at: project.created_at,
            node_count: project.nodes.len(),
        })
        .collect();
    summaries.sort_by_key(|summary| (summary.created_at, summary.id));
    Json(summaries)
}

async fn get_project(State(state): State<AppState>, Path(pid): Path<String>) -> ApiResult<Json<Project>> {
    Ok(Json(state.slot(&pid)?.snapshot()))
}

#[derive(Deserialize)]
struct CreateNode {
    #[serde(default)]
    parent_id: Option<String>,
    kind: String,
    #[serde(default)]
    position: Position,
}

async fn create_node(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    payload: Result<Json<CreateNode>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<IdeaNode>)> {
    state.slot(&pid)?;
    let request = body(payload)?;
    let kind: ExtensionKind = request
        .kind
        .parse()
        .map_err(|_| ApiError::new(ErrorCode::InvalidKind, format!("unknown kind `{}`", request.kind)))?;
    let parent = request.parent_id.as_deref().map(parse_node_id).transpose()?;
    match (parent, kind) {
        (None, ExtensionKind::Root) => {
            let node = state
                .mutate(&pid, |project| Ok(project.create_root_node(request.position)?))
                .await?;
            Ok((StatusCode::CREATED, Json(node)))
        }
        (Some(_), ExtensionKind::Root) | (None, _) => Err(ApiError::new(
            ErrorCode::InvalidKind,
            "kind must be `root` without a parent and `refinement` or `branch` with one",
        )),
        (Some(source), kind) => {
            let st = &state;
            let node = state
                .mutate_async(&pid, |mut project| async move {
                    let node = match project.extend_node(source, kind, request.position) {
                        Ok(node) => node,
                        Err(err) => return (project, Err(err.into())),
                    };
                    if st.auto_meta_reflection() {
                        if let Err(err) = st
                            .agents()
                            .generate_meta_reflection(&mut project, node.id, st.provider())
                            .await
                        {
                            warn!(node = %node.id, error = %err, "automatic meta-reflection failed");
                        }
                    }
                    let node = project.node(node.id).cloned().map_err(ApiError::from);
                    (project, node)
                })
                .await?;
            Ok((StatusCode::CREATED, Json(node)))
        }
    }
}

async fn get_node(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<Json<IdeaNode>> {
    let slot = state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    Ok(Json(slot.read(|project| project.node(id).cloned())?))
}

#[derive(Deserialize)]
struct MoveNode {
    position: Position,
}

async fn move_node(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
    payload: Result<Json<MoveNode>, JsonRejection>,
) -> ApiResult<Json<IdeaNode>> {
    state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    let request = body(payload)?;
    let node = state
        .mutate(&pid, |project| Ok(project.move_node(id, request.position)?))
        .await?;
    Ok(Json(node))
}

async fn delete_node(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    state.mutate(&pid, |project| Ok(project.delete_leaf(id)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_children(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<Json<Children>> {
    let slot = state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    Ok(Json(slot.read(|project| project.list_children(id))?))
}

async fn get_lineage(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<Json<Vec<NodeId>>> {
    let slot = state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    Ok(Json(slot.read(|project| project.lineage(id))?))
}

async fn get_todo(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<Json<CompletionSummary>> {
    let slot = state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    Ok(Json(slot.read(|project| project.completion_summary(id))?))
}

async fn export_node(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let slot = state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    let doc = slot.read(|project| export_markdown(project, id))?;
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], doc).into_response())
}

#[derive(Deserialize)]
struct DiffQuery {
    from: String,
    to: String,
}

async fn diff_nodes(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    query: Result<Query<DiffQuery>, QueryRejection>,
) -> ApiResult<Json<meflex_core::ChangeSet>> {
    let slot = state.slot(&pid)?;
    let Query(query) = query.map_err(|rejection| ApiError::invalid_request(rejection.body_text()))?;
    let from = parse_node_id(&query.from)?;
    let to = parse_node_id(&query.to)?;
    Ok(Json(slot.read(|project| project.diff_nodes(from, to))?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchSection {
    content: Option<String>,
    done: Option<bool>,
}

async fn patch_section(
    State(state): State<AppState>,
    Path((pid, nid, section)): Path<(String, String, String)>,
    payload: Result<Json<PatchSection>, JsonRejection>,
) -> ApiResult<Json<SectionDraft>> {
    state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    let section = parse_section(&section)?;
    let request = body(payload)?;
    if request.content.is_none() && request.done.is_none() {
        return Err(ApiError::invalid_request("expected `content` and/or `done`"));
    }
    let draft = state
        .mutate(&pid, |project| {
            let mut draft = project.node(id)?.sections[section].clone();
            if let Some(content) = request.content {
                draft = project.edit_section(id, section, content)?;
            }
            if let Some(done) = request.done {
                draft = project.set_section_done(id, section, done)?;
            }
            Ok(draft)
        })
        .await?;
    Ok(Json(draft))
}

#[derive(Deserialize)]
struct MessageBody {
    message: String,
}

#[derive(Serialize, Deserialize)]
pub struct ChatReply {
    pub assistant: String,
    pub reflection: String,
}

async fn section_chat(
    State(state): State<AppState>,
    Path((pid, nid, section)): Path<(String, String, String)>,
    payload: Result<Json<MessageBody>, JsonRejection>,
) -> ApiResult<Json<ChatReply>> {
    state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    let section = parse_section(&section)?;
    let message = body(payload)?.message;
    let st = &state;
    let exchange = state
        .mutate_async(&pid, |mut project| async move {
            let result = st
                .agents()
                .section_chat(&mut project, id, section, &message, st.provider())
                .await
                .map_err(ApiError::from);
            (project, result)
        })
        .await?;
    Ok(Json(ChatReply {
        assistant: exchange.assistant.content,
        reflection: exchange.reflection.content,
    }))
}

#[derive(Serialize, Deserialize)]
pub struct MetaReflectionReply {
    pub meta_reflection: String,
}

async fn generate_meta_reflection(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
) -> ApiResult<Json<MetaReflectionReply>> {
    state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    let st = &state;
    let text = state
        .mutate_async(&pid, |mut project| async move {
            let result = st
                .agents()
                .generate_meta_reflection(&mut project, id, st.provider())
                .await
                .map_err(ApiError::from);
            (project, result)
        })
        .await?;
    Ok(Json(MetaReflectionReply { meta_reflection: text }))
}

async fn refine_meta_reflection(
    State(state): State<AppState>,
    Path((pid, nid)): Path<(String, String)>,
    payload: Result<Json<MessageBody>, JsonRejection>,
) -> ApiResult<Json<MetaReflectionReply>> {
    state.slot(&pid)?;
    let id = parse_node_id(&nid)?;
    let message = body(payload)?.message;
    let st = &state;
    let text = state
        .mutate_async(&pid, |mut project| async move {
            let result = st
                .agents()
                .refine_meta_reflection(&mut project, id, &message, st.provider())
                .await
                .map_err(ApiError::from);
            (project, result)
        })
        .await?;
    Ok(Json(MetaReflectionReply { meta_reflection: text }))
}
