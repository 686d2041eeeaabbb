mod support;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::http::{Method, StatusCode};
use meflex_core::{
    ChatProvider, CompletionResult, Project, ProjectStore, PromptBundle, ProviderError,
    ScriptStep, ScriptedProvider,
};
use meflex_server::{AppState, Autosaver};
use serde_json::{json, Value};
use support::{assert_api_error, TestApp};
use tokio::sync::Notify;

#[tokio::test]
async fn project_endpoints() {
    let app = TestApp::new(&[]);
    let listing = app.get("/projects").await;
    assert_eq!(listing.status, StatusCode::OK);
    assert_eq!(listing.json(), json!([]));

    let created = app.post("/projects", json!({"title": "Eco App", "topic": "eco apps"})).await;
    assert_eq!(created.status, StatusCode::CREATED);
    let project = created.json();
    assert_eq!(project["topic"], "eco apps");
    assert_eq!(project["nodes"], json!({}));
    let id = project["id"].as_str().unwrap();

    let fetched = app.get(&format!("/projects/{id}")).await;
    assert_eq!(fetched.json(), project);
    let listing = app.get("/projects").await.json();
    assert_eq!(listing[0]["id"], id);
    assert_eq!(listing[0]["node_count"], 0);

    assert_api_error(&app.get("/projects/00000000-0000-0000-0000-000000000000").await, 404, "unknown_project");
    assert_api_error(&app.get("/projects/not-a-uuid").await, 404, "unknown_project");
    assert_api_error(&app.post("/projects", json!({"title": "", "topic": "eco apps"})).await, 400, "empty_title");
    assert_api_error(&app.post("/projects", json!({"topic": "x"})).await, 400, "invalid_request");

    let free = app.post("/projects", json!({"title": "X"})).await;
    assert_eq!(free.status, StatusCode::CREATED);
    assert_eq!(free.json()["topic"], "");
}

#[tokio::test]
async fn node_creation_rules() {
    let app = TestApp::new(&[]);
    let pid = app.project("Eco App", "eco apps").await;
    let n1 = app.root(&pid).await;
    let patched = app
        .patch(
            &format!("/projects/{pid}/nodes/{n1}/sections/user_pain_points"),
            json!({"content": "long queues"}),
        )
        .await;
    assert_eq!(patched.status, StatusCode::OK);

    let n1_body = app.get(&format!("/projects/{pid}/nodes/{n1}")).await.json();
    let n2 = app.extend(&pid, &n1, "refinement").await;
    assert_eq!(n2["parent_id"], n1.as_str());
    assert_eq!(n2["extension_kind"], "refinement");
    let strip = |sections: &Value| -> Vec<(Value, Value)> {
        sections
            .as_object()
            .unwrap()
            .values()
            .map(|d| (d["content"].clone(), d["status"].clone()))
            .collect()
    };
    assert_eq!(strip(&n2["sections"]), strip(&n1_body["sections"]));
    assert_eq!(n2["sections"]["user_pain_points"]["content"], "long queues");

    let nodes = format!("/projects/{pid}/nodes");
    assert_api_error(&app.post(&nodes, json!({"parent_id": n1, "kind": "root"})).await, 400, "invalid_kind");
    assert_api_error(&app.post(&nodes, json!({"kind": "branch"})).await, 400, "invalid_kind");
    assert_api_error(&app.post(&nodes, json!({"kind": "sideways"})).await, 400, "invalid_kind");
    assert_api_error(
        &app.post(&nodes, json!({"parent_id": "00000000-0000-0000-0000-000000000001", "kind": "branch"})).await,
        404,
        "unknown_node",
    );
    assert_api_error(
        &app.post("/projects/00000000-0000-0000-0000-000000000000/nodes", json!({"kind": "root"})).await,
        404,
        "unknown_project",
    );
}

#[tokio::test]
async fn section_patch_and_todo() {
    let app = TestApp::new(&[]);
    let pid = app.project("P", "").await;
    let n = app.root(&pid).await;
    let url = |s: &str| format!("/projects/{pid}/nodes/{n}/sections/{s}");

    let r = app.patch(&url("market_analysis"), json!({"content": "x"})).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["status"], "in_progress");

    let r = app.patch(&url("market_analysis"), json!({"done": true})).await;
    assert_eq!(r.json()["status"], "done");
    let r = app.patch(&url("market_analysis"), json!({"content": "y"})).await;
    assert_eq!(r.json()["status"], "done");
    let r = app.patch(&url("market_analysis"), json!({"done": false})).await;
    assert_eq!(r.json()["status"], "in_progress");
    let r = app.patch(&url("team"), json!({"content": "a", "done": true})).await;
    assert_eq!(r.json()["status"], "done");

    assert_api_error(&app.patch(&url("funding_plan"), json!({"done": true})).await, 409, "empty_section_cannot_be_done");
    assert_api_error(&app.patch(&url("marketing"), json!({"content": "x"})).await, 400, "invalid_section");
    assert_api_error(&app.patch(&url("team"), json!({})).await, 400, "invalid_request");
    assert_api_error(&app.patch(&url("team"), json!({"text": "x"})).await, 400, "invalid_request");

    let todo = app.get(&format!("/projects/{pid}/nodes/{n}/todo")).await.json();
    assert_eq!(todo["done_count"], 1);
    assert_eq!(todo["sections"]["team"], "done");
    assert_eq!(todo["sections"]["market_analysis"], "in_progress");
    assert_eq!(todo["sections"].as_object().unwrap().len(), 7);
}

#[tokio::test]
async fn graph_reads_and_delete() {
    let app = TestApp::new(&[]);
    let pid = app.project("P", "").await;
    let r = app.root(&pid).await;
    let a = app.extend(&pid, &r, "refinement").await["id"].as_str().unwrap().to_string();
    let b = app.extend(&pid, &r, "branch").await["id"].as_str().unwrap().to_string();
    let c = app.extend(&pid, &a, "refinement").await["id"].as_str().unwrap().to_string();

    let lineage = app.get(&format!("/projects/{pid}/nodes/{c}/lineage")).await.json();
    assert_eq!(lineage, json!([r, a, c]));
    let children = app.get(&format!("/projects/{pid}/nodes/{r}/children")).await.json();
    assert_eq!(children, json!({"root": [], "refinement": [a], "branch": [b]}));

    app.patch(&format!("/projects/{pid}/nodes/{c}/sections/team"), json!({"content": "duo"})).await;
    let diff = app.get(&format!("/projects/{pid}/diff?from={r}&to={c}")).await;
    assert_eq!(diff.status, StatusCode::OK);
    assert_eq!(
        diff.json()["changes"],
        json!([{"section": "team", "kind": "added", "before": "", "after": "duo"}])
    );
    assert_api_error(&app.get(&format!("/projects/{pid}/diff?from={a}&to={b}")).await, 409, "not_on_same_lineage");
    assert_api_error(&app.get(&format!("/projects/{pid}/diff?from={a}")).await, 400, "invalid_request");

    let moved = app.patch(&format!("/projects/{pid}/nodes/{b}"), json!({"position": {"x": 10.0, "y": 20.0}})).await;
    assert_eq!(moved.json()["position"], json!({"x": 10.0, "y": 20.0}));

    assert_api_error(&app.delete(&format!("/projects/{pid}/nodes/{a}")).await, 409, "node_has_children");
    let deleted = app.delete(&format!("/projects/{pid}/nodes/{c}")).await;
    assert_eq!(deleted.status, StatusCode::NO_CONTENT);
    assert_api_error(&app.get(&format!("/projects/{pid}/nodes/{c}")).await, 404, "unknown_node");
    assert_api_error(&app.get(&format!("/projects/{pid}/nodes/xyz/lineage")).await, 404, "unknown_node");
}

#[tokio::test]
async fn chat_and_meta_reflection() {
    let app = TestApp::new(&["A", "Q"]);
    let pid = app.project("Eco App", "eco apps").await;
    let root = app.root(&pid).await;
    let chat = app
        .post(
            &format!("/projects/{pid}/nodes/{root}/sections/market_analysis/chat"),
            json!({"message": "where do I start?"}),
        )
        .await;
    assert_eq!(chat.status, StatusCode::OK);
    assert_eq!(chat.json(), json!({"assistant": "A", "reflection": "Q"}));
    let node = app.get(&format!("/projects/{pid}/nodes/{root}")).await.json();
    let roles: Vec<&str> = node["chat_threads"]["market_analysis"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, vec!["user", "assistant", "reflection_question"]);

    assert_api_error(
        &app.post(&format!("/projects/{pid}/nodes/{root}/meta-reflection"), json!({})).await,
        409,
        "root_has_no_evolution",
    );
    assert_api_error(
        &app.post(&format!("/projects/{pid}/nodes/{root}/sections/team/chat"), json!({"message": ""})).await,
        400,
        "empty_message",
    );

    let child = app.extend(&pid, &root, "branch").await["id"].as_str().unwrap().to_string();
    assert_api_error(
        &app.post(&format!("/projects/{pid}/nodes/{child}/meta-reflection/chat"), json!({"message": "why"})).await,
        409,
        "no_meta_reflection_yet",
    );
    app.provider.push_reply("it grew");
    let meta = app.post(&format!("/projects/{pid}/nodes/{child}/meta-reflection"), json!({})).await;
    assert_eq!(meta.json(), json!({"meta_reflection": "it grew"}));
    app.provider.push_reply("it grew a lot");
    let refined = app
        .post(&format!("/projects/{pid}/nodes/{child}/meta-reflection/chat"), json!({"message": "more"}))
        .await;
    assert_eq!(refined.json(), json!({"meta_reflection": "it grew a lot"}));
    let node = app.get(&format!("/projects/{pid}/nodes/{child}")).await.json();
    assert_eq!(node["meta_reflection"], "it grew a lot");
    assert_eq!(node["meta_thread"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn provider_outage_is_502_and_atomic() {
    let app = TestApp::new(&[]);
    app.provider.push(ScriptStep::Reply("A".into()));
    app.provider.push(ScriptStep::Fail(ProviderError::ServerError { status: 503 }));
    let pid = app.project("P", "").await;
    let root = app.root(&pid).await;
    let before = app.get(&format!("/projects/{pid}")).await.bytes;
    let reply = app
        .post(&format!("/projects/{pid}/nodes/{root}/sections/team/chat"), json!({"message": "hi"}))
        .await;
    assert_api_error(&reply, 502, "provider_error");
    assert_eq!(app.get(&format!("/projects/{pid}")).await.bytes, before);
}

#[tokio::test]
async fn automatic_meta_reflection_on_extend() {
    let app = TestApp::with_auto_meta(&["first summary"], true);
    let pid = app.project("P", "").await;
    let root = app.root(&pid).await;
    assert_eq!(app.provider.call_count(), 0, "roots get no meta-reflection");
    let child = app.extend(&pid, &root, "refinement").await;
    assert_eq!(child["meta_reflection"], "first summary");

    // Script exhausted: the node is still created, without a summary.
    let other = app.extend(&pid, &root, "branch").await;
    assert_eq!(other["meta_reflection"], Value::Null);
}

#[tokio::test]
async fn export_and_misc_endpoints() {
    let app = TestApp::new(&[]);
    let pid = app.project("Eco App", "eco apps").await;
    let root = app.root(&pid).await;
    let export = app.get(&format!("/projects/{pid}/nodes/{root}/export")).await;
    assert_eq!(export.status, StatusCode::OK);
    assert!(export.content_type.as_deref().unwrap().starts_with("text/markdown"));
    let doc = export.text();
    assert!(doc.starts_with("# Eco App"));
    assert_eq!(doc.matches("(not yet written)").count(), 7);

    let topics = app.get("/topics").await.json();
    assert_eq!(topics["topics"].as_array().unwrap().len(), 10);
    let agents = app.get("/agents").await.json();
    assert_eq!(agents.as_array().unwrap().len(), 9);
    assert_eq!(agents[1]["label"], "Market Analysis");

    assert_api_error(&app.get("/nowhere").await, 404, "unknown_route");
    assert_api_error(&app.call(Method::PUT, "/projects", None).await, 405, "method_not_allowed");
}

#[tokio::test]
async fn repeated_reads_are_byte_identical() {
    let app = TestApp::new(&["A", "Q"]);
    let pid = app.project("P", "eco apps").await;
    let root = app.root(&pid).await;
    app.extend(&pid, &root, "branch").await;
    app.post(&format!("/projects/{pid}/nodes/{root}/sections/team/chat"), json!({"message": "hi"}))
        .await;
    for uri in [
        "/projects".to_string(),
        format!("/projects/{pid}"),
        format!("/projects/{pid}/nodes/{root}"),
        format!("/projects/{pid}/nodes/{root}/children"),
        format!("/projects/{pid}/nodes/{root}/todo"),
        format!("/projects/{pid}/nodes/{root}/export"),
    ] {
        let first = app.get(&uri).await.bytes;
        for _ in 0..3 {
            assert_eq!(app.get(&uri).await.bytes, first, "{uri}");
        }
    }
}

#[tokio::test]
async fn autosave_writes_project_file() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ProjectStore::open(dir.path()).unwrap());
    let provider = Arc::new(ScriptedProvider::new(Vec::<String>::new()));
    let state = AppState::builder(provider.clone())
        .auto_meta_reflection(false)
        .autosave(Autosaver::new(store.clone(), Duration::from_millis(50)))
        .build();
    let app = TestApp::from_state(state, provider);
    let pid = app.project("Saved", "").await;
    let root = app.root(&pid).await;
    app.patch(&format!("/projects/{pid}/nodes/{root}/sections/team"), json!({"content": "duo"})).await;

    let expected: Project = serde_json::from_slice(&app.get(&format!("/projects/{pid}")).await.bytes).unwrap();
    let mut loaded = None;
    for _ in 0..50 {
        tokio::time::sleep(Duration::from_millis(20)).await;
        if let Ok(project) = store.load(expected.id) {
            if project == expected {
                loaded = Some(project);
                break;
            }
        }
    }
    assert_eq!(loaded, Some(expected));
}

#[tokio::test]
async fn autosave_is_debounced() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ProjectStore::open(dir.path()).unwrap());
    let provider = Arc::new(ScriptedProvider::new(Vec::<String>::new()));
    let state = AppState::builder(provider.clone())
        .autosave(Autosaver::new(store.clone(), Duration::from_millis(300)))
        .build();
    let app = TestApp::from_state(state, provider);
    let pid = app.project("Debounced", "").await;
    let path = store.path_for(pid.parse().unwrap());
    for _ in 0..5 {
        app.root(&pid).await;
        tokio::time::sleep(Duration::from_millis(100)).await;
        assert!(!path.exists(), "saved before the project went quiet");
    }
    tokio::time::sleep(Duration::from_millis(600)).await;
    assert_eq!(store.load(pid.parse().unwrap()).unwrap().nodes.len(), 5);
}

/// Blocks every completion until released.
struct GatedProvider {
    gate: Notify,
    entered: Notify,
}

#[async_trait]
impl ChatProvider for GatedProvider {
    async fn complete(&self, _bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        self.entered.notify_one();
        self.gate.notified().await;
        Ok(CompletionResult::stop("slow"))
    }
}

#[tokio::test]
async fn slow_provider_does_not_block_reads() {
    let provider = Arc::new(GatedProvider {
        gate: Notify::new(),
        entered: Notify::new(),
    });
    let state = AppState::builder(provider.clone()).auto_meta_reflection(false).build();
    let app = Arc::new(TestApp {
        router: meflex_server::router(state.clone()),
        provider: Arc::new(ScriptedProvider::default()),
        state,
    });
    let busy = app.project("Busy", "").await;
    let other = app.project("Other", "").await;
    let root = app.root(&busy).await;

    let chat = {
        let app = Arc::clone(&app);
        let uri = format!("/projects/{busy}/nodes/{root}/sections/team/chat");
        tokio::spawn(async move { app.post(&uri, json!({"message": "hi"})).await })
    };
    provider.entered.notified().await;

    let within = Duration::from_secs(1);
    let read = tokio::time::timeout(within, app.get(&format!("/projects/{busy}"))).await.unwrap();
    assert_eq!(read.status, StatusCode::OK);
    let thread = &read.json()["nodes"][&root]["chat_threads"]["team"];
    assert_eq!(thread, &json!([]), "half-applied chat must not be visible");
    let write = tokio::time::timeout(within, app.root(&other)).await;
    assert!(write.is_ok(), "other projects stay writable");

    provider.gate.notify_one();
    provider.entered.notified().await;
    provider.gate.notify_one();
    let reply = chat.await.unwrap();
    assert_eq!(reply.status, StatusCode::OK);
    let thread = app.get(&format!("/projects/{busy}/nodes/{root}")).await.json()["chat_threads"]["team"].clone();
    assert_eq!(thread.as_array().unwrap().len(), 3);
}
