use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use meflex_core::{AgentError, GraphError, StoreError};
use serde::{Deserialize, Serialize};

/// Closed set of error codes returned by the API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownProject,
    UnknownNode,
    UnknownRoute,
    MethodNotAllowed,
    InvalidRequest,
    InvalidSection,
    InvalidKind,
    InvalidPosition,
    EmptyTitle,
    EmptyMessage,
    EmptySectionCannotBeDone,
    NotOnSameLineage,
    NodeHasChildren,
    RootHasNoEvolution,
    NoMetaReflectionYet,
    ProviderError,
    StorageError,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 17] = [
        ErrorCode::UnknownProject,
        ErrorCode::UnknownNode,
        ErrorCode::UnknownRoute,
        ErrorCode::MethodNotAllowed,
        ErrorCode::InvalidRequest,
        ErrorCode::InvalidSection,
        ErrorCode::InvalidKind,
        ErrorCode::InvalidPosition,
        ErrorCode::EmptyTitle,
        ErrorCode::EmptyMessage,
        ErrorCode::EmptySectionCannotBeDone,
        ErrorCode::NotOnSameLineage,
        ErrorCode::NodeHasChildren,
        ErrorCode::RootHasNoEvolution,
        ErrorCode::NoMetaReflectionYet,
        ErrorCode::ProviderError,
        ErrorCode::StorageError,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::UnknownProject | ErrorCode::UnknownNode | ErrorCode::UnknownRoute => {
                StatusCode::NOT_FOUND
            }
            ErrorCode::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ErrorCode::InvalidRequest
            | ErrorCode::InvalidSection
            | ErrorCode::InvalidKind
            | ErrorCode::InvalidPosition
            | ErrorCode::EmptyTitle
            | ErrorCode::EmptyMessage => StatusCode::BAD_REQUEST,
            ErrorCode::EmptySectionCannotBeDone
            | ErrorCode::NotOnSameLineage
            | ErrorCode::NodeHasChildren
            | ErrorCode::RootHasNoEvolution
            | ErrorCode::NoMetaReflectionYet => StatusCode::CONFLICT,
            ErrorCode::ProviderError => StatusCode::BAD_GATEWAY,
            ErrorCode::StorageError => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            http_status: code.status().as_u16(),
        }
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidRequest, message)
    }

    pub fn unknown_project(id: &str) -> Self {
        Self::new(ErrorCode::UnknownProject, format!("unknown project {id}"))
    }

    pub fn unknown_node(id: &str) -> Self {
        Self::new(ErrorCode::UnknownNode, format!("unknown node {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<GraphError> for ApiError {
    fn from(err: GraphError) -> Self {
        let code = match err {
            GraphError::EmptyTitle => ErrorCode::EmptyTitle,
            GraphError::UnknownNode(_) => ErrorCode::UnknownNode,
            GraphError::InvalidKind => ErrorCode::InvalidKind,
            GraphError::EmptySectionCannotBeDone(_) => ErrorCode::EmptySectionCannotBeDone,
            GraphError::NotOnSameLineage { .. } => ErrorCode::NotOnSameLineage,
            GraphError::NodeHasChildren(_) => ErrorCode::NodeHasChildren,
            GraphError::InvalidPosition => ErrorCode::InvalidPosition,
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<AgentError> for ApiError {
    fn from(err: AgentError) -> Self {
        match err {
            AgentError::Graph(graph) => graph.into(),
            AgentError::EmptyMessage => ApiError::new(ErrorCode::EmptyMessage, err.to_string()),
            AgentError::RootHasNoEvolution(_) => {
                ApiError::new(ErrorCode::RootHasNoEvolution, err.to_string())
            }
            AgentError::NoMetaReflectionYet(_) => {
                ApiError::new(ErrorCode::NoMetaReflectionYet, err.to_string())
            }
            AgentError::Provider(_) => ApiError::new(ErrorCode::ProviderError, err.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        ApiError::new(ErrorCode::StorageError, err.to_string())
    }
}
