//! Chat-completion contract shared by the live HTTP provider and the
//! scripted provider used in tests.

mod http;
mod scripted;

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use http::HttpProvider;
pub use scripted::{ScriptStep, ScriptedProvider};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;
pub const DEFAULT_MODEL: &str = "deepseek-chat";
pub const DEFAULT_BASE_URL: &str = "https://api.deepseek.com";
pub const MAX_RETRIES_LIMIT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnRole {
    User,
    Assistant,
}

impl TurnRole {
    pub fn wire_name(self) -> &'static str {
        match self {
            TurnRole::User => "user",
            TurnRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTurn {
    pub role: TurnRole,
    pub content: String,
}

impl PromptTurn {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: TurnRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: TurnRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model: String,
}

impl SamplingParams {
    pub fn with_model(model: impl Into<String>) -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            model: model.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        if self.model.trim().is_empty() {
            return Err("model identifier is empty".into());
        }
        Ok(())
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self::with_model(DEFAULT_MODEL)
    }
}

/// Everything a provider needs for one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub history: Vec<PromptTurn>,
    pub user: String,
    pub sampling: SamplingParams,
}

impl PromptBundle {
    /// Messages in wire order: system, history, then the new user turn.
    pub fn messages(&self) -> Vec<(&'static str, &str)> {
        let mut messages = Vec::with_capacity(self.history.len() + 2);
        messages.push(("system", self.system.as_str()));
        messages.extend(
            self.history
                .iter()
                .map(|turn| (turn.role.wire_name(), turn.content.as_str())),
        );
        messages.push(("user", self.user.as_str()));
        messages
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.system.trim().is_empty() {
            return Err("system prompt is empty".into());
        }
        if self.user.is_empty() {
            return Err("user message is empty".into());
        }
        self.sampling.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Option<Usage>,
}

impl CompletionResult {
    pub fn stop(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            finish_reason: FinishReason::Stop,
            usage: None,
        }
    }
}

/// Provider failures. Messages never include credentials.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by provider")]
    RateLimited,
    #[error("provider rejected the credentials")]
    AuthFailed,
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider rejected the request with HTTP {status}")]
    Rejected { status: u16 },
    #[error("provider failed with HTTP {status}")]
    ServerError { status: u16 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid prompt bundle: {0}")]
    InvalidRequest(String),
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError>;
}

/// API key wrapper whose `Debug` and `Display` never reveal the secret.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

impl fmt::Display for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("max_retries {0} exceeds the limit of {MAX_RETRIES_LIMIT}")]
    TooManyRetries(u32),
    #[error("base URL is empty")]
    EmptyBaseUrl,
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: ApiKey,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: ApiKey::default(),
            model: DEFAULT_MODEL.to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl ProviderConfig {
    /// Defaults overridden by `LLM_BASE_URL`, `LLM_API_KEY` and `LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            if !url.is_empty() {
                config.base_url = url;
            }
        }
        if let Ok(key) = std::env::var("LLM_API_KEY") {
            config.api_key = ApiKey::new(key);
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            if !model.is_empty() {
                config.model = model;
            }
        }
        config
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(ConfigError::TooManyRetries(self.max_retries));
        }
        if self.base_url.trim().is_empty() {
            return Err(ConfigError::EmptyBaseUrl);
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}
