#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use meflex_core::ScriptedProvider;
use meflex_server::{router, AppState};
use serde_json::Value;
use tower::ServiceExt;

pub struct TestApp {
    pub router: Router,
    pub provider: Arc<ScriptedProvider>,
    pub state: AppState,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes)
            .unwrap_or_else(|err| panic!("body is not JSON ({err}): {}", String::from_utf8_lossy(&self.bytes)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.bytes.clone()).unwrap()
    }
}

impl TestApp {
    pub fn new(replies: &[&str]) -> Self {
        Self::with_auto_meta(replies, false)
    }

    pub fn with_auto_meta(replies: &[&str], auto_meta: bool) -> Self {
        let provider = Arc::new(ScriptedProvider::new(replies.iter().copied()));
        let state = AppState::builder(provider.clone())
            .auto_meta_reflection(auto_meta)
            .build();
        Self {
            router: router(state.clone()),
            provider,
            state,
        }
    }

    pub fn from_state(state: AppState, provider: Arc<ScriptedProvider>) -> Self {
        Self {
            router: router(state.clone()),
            provider,
            state,
        }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let mut request = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(value) => {
                request = request.header("content-type", "application/json");
                Body::from(value.to_string())
            }
            None => Body::empty(),
        };
        self.raw(request.body(body).unwrap()).await
    }

    pub async fn raw(&self, request: Request<Body>) -> Reply {
        let response = self.router.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let content_type = response
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply {
            status,
            content_type,
            bytes,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.call(Method::POST, uri, Some(body)).await
    }

    pub async fn patch(&self, uri: &str, body: Value) -> Reply {
        self.call(Method::PATCH, uri, Some(body)).await
    }

    pub async fn delete(&self, uri: &str) -> Reply {
        self.call(Method::DELETE, uri, None).await
    }

    /// Creates a project and returns its id.
    pub async fn project(&self, title: &str, topic: &str) -> String {
        let reply = self
            .post("/projects", serde_json::json!({"title": title, "topic": topic}))
            .await;
        assert_eq!(reply.status, StatusCode::CREATED);
        reply.json()["id"].as_str().unwrap().to_string()
    }

    pub async fn root(&self, pid: &str) -> String {
        let reply = self
            .post(&format!("/projects/{pid}/nodes"), serde_json::json!({"kind": "root"}))
            .await;
        assert_eq!(reply.status, StatusCode::CREATED, "{}", reply.text());
        reply.json()["id"].as_str().unwrap().to_string()
    }

    pub async fn extend(&self, pid: &str, parent: &str, kind: &str) -> Value {
        let reply = self
            .post(
                &format!("/projects/{pid}/nodes"),
                serde_json::json!({"parent_id": parent, "kind": kind, "position": {"x": 200.0, "y": 0.0}}),
            )
            .await;
        assert_eq!(reply.status, StatusCode::CREATED, "{}", reply.text());
        reply.json()
    }
}

/// Asserts the body is an ApiError with the given code and matching status.
pub fn assert_api_error(reply: &Reply, status: u16, code: &str) {
    assert_eq!(reply.status.as_u16(), status, "{}", reply.text());
    let body = reply.json();
    assert_eq!(body["code"], code, "{body}");
    assert_eq!(body["http_status"], status);
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}
