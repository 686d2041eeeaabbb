use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{
    ChatProvider, CompletionResult, ConfigError, FinishReason, PromptBundle, ProviderConfig,
    ProviderError, Usage,
};

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    stream: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Outcome of one HTTP attempt.
enum Attempt {
    Done(Result<CompletionResult, ProviderError>),
    Retry(ProviderError),
}

/// Provider for any endpoint speaking the common chat-completions JSON shape
/// (`POST {base_url}/chat/completions`, bearer auth).
///
/// Transport errors, timeouts, HTTP 429 and 5xx are retried with exponential
/// backoff (`backoff_base * 2^attempt`); other 4xx responses fail at once.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    client: reqwest::Client,
    config: ProviderConfig,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .expect("reqwest client with a plain timeout always builds");
        Ok(Self { client, config })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.config.backoff_base.saturating_mul(1u32 << attempt.min(16))
    }

    async fn attempt(&self, body: &WireRequest<'_>) -> Attempt {
        let mut request = self.client.post(self.config.completions_url()).json(body);
        if !self.config.api_key.is_empty() {
            request = request.bearer_auth(self.config.api_key.expose());
        }
        let response = match request.send().await {
            Ok(response) => response,
            Err(err) if err.is_timeout() => return Attempt::Retry(ProviderError::Timeout),
            Err(err) => {
                return Attempt::Retry(ProviderError::Transport(describe_transport(&err)))
            }
        };
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry(ProviderError::RateLimited);
        }
        if status.is_server_error() {
            return Attempt::Retry(ProviderError::ServerError {
                status: status.as_u16(),
            });
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Done(Err(ProviderError::AuthFailed));
        }
        if !status.is_success() {
            return Attempt::Done(Err(ProviderError::Rejected {
                status: status.as_u16(),
            }));
        }
        let bytes = match response.bytes().await {
            Ok(bytes) => bytes,
            Err(err) if err.is_timeout() => return Attempt::Retry(ProviderError::Timeout),
            Err(err) => {
                return Attempt::Retry(ProviderError::Transport(describe_transport(&err)))
            }
        };
        Attempt::Done(parse_response(&bytes))
    }
}

fn describe_transport(err: &reqwest::Error) -> String {
    // The URL is safe to show; credentials travel only in headers.
    if err.is_connect() {
        "connection failed".to_string()
    } else {
        err.to_string()
    }
}

fn parse_response(bytes: &[u8]) -> Result<CompletionResult, ProviderError> {
    let response: WireResponse = serde_json::from_slice(bytes)
        .map_err(|err| ProviderError::MalformedResponse(err.to_string()))?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::MalformedResponse("no choices in response".into()))?;
    let content = choice.message.content.unwrap_or_default();
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    if finish_reason == FinishReason::Stop && content.is_empty() {
        return Err(ProviderError::MalformedResponse(
            "empty completion with finish_reason stop".into(),
        ));
    }
    Ok(CompletionResult {
        content,
        finish_reason,
        usage: response.usage.map(|usage| Usage {
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        }),
    })
}

#[async_trait]
impl ChatProvider for HttpProvider {
    async fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        bundle.validate().map_err(ProviderError::InvalidRequest)?;
        let body = WireRequest {
            model: &bundle.sampling.model,
            messages: bundle
                .messages()
                .into_iter()
                .map(|(role, content)| WireMessage { role, content })
                .collect(),
            temperature: bundle.sampling.temperature,
            max_tokens: bundle.sampling.max_output_tokens,
            stream: false,
        };
        let mut attempt = 0;
        loop {
            match self.attempt(&body).await {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) if attempt >= self.config.max_retries => {
                    warn!(attempts = attempt + 1, error = %err, "chat completion failed");
                    return Err(err);
                }
                Attempt::Retry(err) => {
                    let delay = self.backoff(attempt);
                    debug!(attempt, ?delay, error = %err, "retrying chat completion");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
            }
        }
    }
}
