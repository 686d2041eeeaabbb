use std::collections::VecDeque;
use std::sync::Mutex;

use async_trait::async_trait;

use super::{ChatProvider, CompletionResult, PromptBundle, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(String),
    Fail(ProviderError),
}

#[derive(Debug, Default)]
struct ScriptState {
    steps: VecDeque<ScriptStep>,
    recorded: Vec<PromptBundle>,
}

/// Deterministic provider that replays a fixed queue of answers and records
/// every bundle it receives. An exhausted script yields `MalformedResponse`.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    state: Mutex<ScriptState>,
}

impl ScriptedProvider {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_steps(replies.into_iter().map(|reply| ScriptStep::Reply(reply.into())))
    }

    pub fn from_steps(steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        Self {
            state: Mutex::new(ScriptState {
                steps: steps.into_iter().collect(),
                recorded: Vec::new(),
            }),
        }
    }

    pub fn push(&self, step: ScriptStep) {
        self.lock().steps.push_back(step);
    }

    pub fn push_reply(&self, reply: impl Into<String>) {
        self.push(ScriptStep::Reply(reply.into()));
    }

    pub fn push_failure(&self, error: ProviderError) {
        self.push(ScriptStep::Fail(error));
    }

    /// Bundles received so far, in call order.
    pub fn recorded(&self) -> Vec<PromptBundle> {
        self.lock().recorded.clone()
    }

    pub fn call_count(&self) -> usize {
        self.lock().recorded.len()
    }

    pub fn remaining(&self) -> usize {
        self.lock().steps.len()
    }

    pub fn clear_recorded(&self) {
        self.lock().recorded.clear();
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn complete(&self, bundle: &PromptBundle) -> Result<CompletionResult, ProviderError> {
        let mut state = self.lock();
        state.recorded.push(bundle.clone());
        match state.steps.pop_front() {
            Some(ScriptStep::Reply(text)) => Ok(CompletionResult::stop(text)),
            Some(ScriptStep::Fail(error)) => Err(error),
            None => Err(ProviderError::MalformedResponse("script exhausted".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FinishReason, SamplingParams};

    fn bundle(user: &str) -> PromptBundle {
        PromptBundle {
            system: "sys".into(),
            history: Vec::new(),
            user: user.into(),
            sampling: SamplingParams::default(),
        }
    }

    #[tokio::test]
    async fn replays_in_order_then_exhausts() {
        let provider = ScriptedProvider::new(["a", "b"]);
        let first = provider.complete(&bundle("1")).await.unwrap();
        assert_eq!(first.content, "a");
        assert_eq!(first.finish_reason, FinishReason::Stop);
        assert_eq!(provider.complete(&bundle("2")).await.unwrap().content, "b");
        assert!(matches!(
            provider.complete(&bundle("3")).await,
            Err(ProviderError::MalformedResponse(_))
        ));
        let recorded = provider.recorded();
        assert_eq!(recorded.len(), 3);
        assert_eq!(provider.call_count(), 3);
        assert_eq!(recorded[1].user, "2");
    }

    #[tokio::test]
    async fn single_reply_and_empty_script() {
        let provider = ScriptedProvider::new(["x"]);
        assert_eq!(provider.complete(&bundle("q")).await.unwrap(), CompletionResult::stop("x"));

        let empty = ScriptedProvider::new(Vec::<String>::new());
        assert!(matches!(
            empty.complete(&bundle("q")).await,
            Err(ProviderError::MalformedResponse(_))
        ));
    }

    #[tokio::test]
    async fn injected_failures() {
        let provider = ScriptedProvider::from_steps([
            ScriptStep::Fail(ProviderError::Timeout),
            ScriptStep::Reply("ok".into()),
        ]);
        assert_eq!(provider.complete(&bundle("q")).await, Err(ProviderError::Timeout));
        assert_eq!(provider.complete(&bundle("q")).await.unwrap().content, "ok");
    }
}
