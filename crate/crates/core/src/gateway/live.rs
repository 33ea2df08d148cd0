use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{BackendFailure, BackendReply, ChatBackend, ChatRequest, FinishReason, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    /// Model used when the request's tag has no override.
    pub model: String,
    pub model_overrides: BTreeMap<String, String>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4.1".into(),
            model_overrides: BTreeMap::new(),
            api_key_env: "WEBAGG_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

/// Speaks the common chat-completions JSON dialect over HTTP.
#[derive(Debug)]
pub struct HttpChatBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, String> {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn model_for(&self, tag: &str) -> &str {
        self.config
            .model_overrides
            .get(tag)
            .map(String::as_str)
            .unwrap_or(&self.config.model)
    }

    pub fn request_body(&self, req: &ChatRequest) -> Json {
        let messages: Vec<Json> = req
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                    // Observations are plain user turns; no tool-call ids exist here.
                    Role::Tool => "user",
                };
                if m.attachments.is_empty() {
                    json!({"role": role, "content": m.content})
                } else {
                    let mut parts = vec![json!({"type": "text", "text": m.content})];
                    parts.extend(m.attachments.iter().map(|a| {
                        json!({"type": "image_url", "image_url": {"url": a}})
                    }));
                    json!({"role": role, "content": parts})
                }
            })
            .collect();
        json!({
            "model": self.model_for(&req.model_tag),
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        })
    }
}

pub(crate) fn parse_completion(body: &Json) -> Result<BackendReply, BackendFailure> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendFailure::Transient("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Json::as_str)
        .unwrap_or_default()
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Json::as_str) {
        Some("length") => FinishReason::Truncated,
        Some("content_filter") => FinishReason::Refused,
        _ => FinishReason::Complete,
    };
    Ok(BackendReply { text, finish_reason })
}

pub(crate) fn classify_status(status: u16) -> Option<bool> {
    match status {
        200..=299 => None,
        408 | 409 | 425 | 429 | 500..=599 => Some(true),
        _ => Some(false),
    }
}

impl ChatBackend for HttpChatBackend {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, BackendFailure> {
        let mut http = self.client.post(&self.config.endpoint).json(&self.request_body(request));
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http
            .send()
            .map_err(|e| BackendFailure::Transient(format!("request failed: {e}")))?;
        let status = resp.status().as_u16();
        match classify_status(status) {
            Some(true) => return Err(BackendFailure::Transient(format!("HTTP {status}"))),
            Some(false) => {
                let body = resp.text().unwrap_or_default();
                return Err(BackendFailure::Fatal(format!("HTTP {status}: {body}")));
            }
            None => {}
        }
        let body: Json = resp
            .json()
            .map_err(|e| BackendFailure::Transient(format!("malformed body: {e}")))?;
        parse_completion(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::super::ChatMessage;
    use super::*;

    #[test]
    fn body_carries_attachments_as_parts() {
        let backend = HttpChatBackend::new(HttpBackendConfig {
            model_overrides: [("judge".to_string(), "judge-model".to_string())].into(),
            ..Default::default()
        })
        .unwrap();
        let req = ChatRequest::new(
            "judge",
            vec![ChatMessage::system("s"), ChatMessage::user("describe").with_attachment("a.png")],
        );
        let body = backend.request_body(&req);
        assert_eq!(body["model"], "judge-model");
        assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "a.png");
        assert_eq!(body["messages"][0]["content"], "s");
    }

    #[test]
    fn completion_parsing() {
        let ok = json!({"choices": [{"message": {"content": "hi"}, "finish_reason": "length"}]});
        let r = parse_completion(&ok).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.finish_reason, FinishReason::Truncated);
        assert!(parse_completion(&json!({})).is_err());
    }

    #[test]
    fn status_classes() {
        assert_eq!(classify_status(200), None);
        assert_eq!(classify_status(429), Some(true));
        assert_eq!(classify_status(503), Some(true));
        assert_eq!(classify_status(401), Some(false));
    }
}
