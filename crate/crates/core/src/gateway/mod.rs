//! Provider-agnostic chat completion with retry and rate limiting.
//!
//! A [`Gateway`] wraps one [`ChatBackend`]. Backends report transient
//! failures, which the gateway retries with bounded exponential backoff, and
//! fatal ones, which it surfaces immediately.

mod limiter;
mod live;
mod scripted;

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use limiter::{RateLimit, TokenBucket};
pub use live::{HttpBackendConfig, HttpChatBackend};
pub use scripted::{
    make_scripted_backend, ExhaustionPolicy, Matcher, ResponseScript, ScriptEntry, ScriptOutcome,
    ScriptedBackend, TranscriptEntry,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// References to files sent alongside the text (e.g. images to caption).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            attachments: Vec::new(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn with_attachment(mut self, reference: impl Into<String>) -> Self {
        self.attachments.push(reference.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub model_tag: String,
}

impl ChatRequest {
    pub fn new(model_tag: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            max_output_tokens: 4096,
            model_tag: model_tag.into(),
        }
    }

    pub fn with_temperature(mut self, t: f32) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("message list is empty".into()))?;
        if !matches!(first.role, Role::System | Role::User) {
            return Err(GatewayError::InvalidRequest(
                "first message must be system or user".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Content of the first user message, i.e. the task being worked on.
    pub fn task_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    #[default]
    Complete,
    Truncated,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub attempts_used: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    /// Worth retrying: network faults, rate limiting, server errors.
    Transient(String),
    /// The backend refused the request outright.
    Fatal(String),
    /// A scripted backend had no entry for the request.
    ScriptMiss(String),
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, BackendFailure>;
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend exhausted after {attempts} attempt(s): {last}")]
    BackendExhausted { attempts: u32, last: String },
    #[error("backend returned empty text after {attempts} attempt(s)")]
    RefusalOrEmpty { attempts: u32 },
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("script miss: {0}")]
    ScriptMiss(String),
    #[error("response script is empty")]
    EmptyScript,
    #[error("failed to load script: {0}")]
    ScriptLoad(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// No waiting and no jitter; used for scripted runs and tests.
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            max_delay_ms: 0,
            factor: 1.0,
            jitter: false,
        }
    }

    /// Delay before retry number `attempt` (1-based count of failures so far).
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self.factor.powi(attempt.saturating_sub(1) as i32);
        let mut ms = (self.base_delay_ms as f64 * exp).min(self.max_delay_ms as f64);
        if self.jitter && ms > 0.0 {
            ms *= rand::thread_rng().gen_range(0.5..1.5);
            ms = ms.min(self.max_delay_ms as f64);
        }
        Duration::from_millis(ms as u64)
    }
}

/// Retry, rate limiting and validation in front of a backend. Cheap to clone
/// and safe to share across threads.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Option<Arc<TokenBucket>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, retry: RetryPolicy) -> Self {
        Self {
            backend,
            retry,
            limiter: None,
        }
    }

    pub fn with_rate_limit(mut self, bucket: TokenBucket) -> Self {
        self.limiter = Some(Arc::new(bucket));
        self
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let max = self.retry.max_attempts.max(1);
        let mut last = String::new();
        let mut all_empty = true;
        for attempt in 1..=max {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            match self.backend.send(request) {
                Ok(reply) if reply.text.trim().is_empty() => {
                    last = "empty response".into();
                }
                Ok(reply) => {
                    return Ok(ChatResponse {
                        text: reply.text,
                        finish_reason: reply.finish_reason,
                        attempts_used: attempt,
                    })
                }
                Err(BackendFailure::Transient(msg)) => {
                    all_empty = false;
                    log::debug!("transient backend failure (attempt {attempt}/{max}): {msg}");
                    last = msg;
                }
                Err(BackendFailure::Fatal(msg)) => return Err(GatewayError::Rejected(msg)),
                Err(BackendFailure::ScriptMiss(msg)) => return Err(GatewayError::ScriptMiss(msg)),
            }
            if attempt < max {
                let wait = self.retry.delay(attempt);
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
        }
        if all_empty {
            Err(GatewayError::RefusalOrEmpty { attempts: max })
        } else {
            Err(GatewayError::BackendExhausted {
                attempts: max,
                last,
            })
        }
    }

    /// Convenience for single-turn prompts.
    pub fn ask(
        &self,
        model_tag: &str,
        temperature: f32,
        system: &str,
        user: &str,
    ) -> Result<ChatResponse, GatewayError> {
        let req = ChatRequest::new(
            model_tag,
            vec![ChatMessage::system(system), ChatMessage::user(user)],
        )
        .with_temperature(temperature);
        self.complete(&req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn send(&self, _: &ChatRequest) -> Result<BackendReply, BackendFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(BackendFailure::Transient(format!("fail {n}")))
            } else {
                Ok(BackendReply {
                    text: "ok".into(),
                    finish_reason: FinishReason::Complete,
                })
            }
        }
    }

    fn req() -> ChatRequest {
        ChatRequest::new("t", vec![ChatMessage::user("hi")])
    }

    #[test]
    fn retries_until_success() {
        let gw = Gateway::new(
            Arc::new(Flaky { failures: 2, calls: AtomicU32::new(0) }),
            RetryPolicy::immediate(3),
        );
        let resp = gw.complete(&req()).unwrap();
        assert_eq!(resp.attempts_used, 3);
        assert_eq!(resp.text, "ok");
    }

    #[test]
    fn exhausts_after_max_attempts() {
        let backend = Arc::new(Flaky { failures: 4, calls: AtomicU32::new(0) });
        let gw = Gateway::new(backend.clone(), RetryPolicy::immediate(3));
        let err = gw.complete(&req()).unwrap_err();
        assert!(matches!(err, GatewayError::BackendExhausted { attempts: 3, .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn well_formed_reply_is_never_retried() {
        let backend = Arc::new(Flaky { failures: 0, calls: AtomicU32::new(0) });
        let gw = Gateway::new(backend.clone(), RetryPolicy::immediate(5));
        assert_eq!(gw.complete(&req()).unwrap().attempts_used, 1);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn request_validation() {
        let gw = Gateway::new(
            Arc::new(Flaky { failures: 0, calls: AtomicU32::new(0) }),
            RetryPolicy::immediate(1),
        );
        let empty = ChatRequest::new("t", vec![]);
        assert!(matches!(gw.complete(&empty), Err(GatewayError::InvalidRequest(_))));
        let assistant_first = ChatRequest::new("t", vec![ChatMessage::new(Role::Assistant, "x")]);
        assert!(gw.complete(&assistant_first).is_err());
        assert!(gw.complete(&req().with_temperature(1.5)).is_err());
    }

    #[test]
    fn backoff_is_bounded_and_deterministic_without_jitter() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 100,
            max_delay_ms: 250,
            factor: 2.0,
            jitter: false,
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(250));
        let jittered = RetryPolicy { jitter: true, ..p };
        for k in 1..5 {
            assert!(jittered.delay(k) <= Duration::from_millis(250));
        }
    }
}
