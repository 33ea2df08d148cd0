use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendFailure, BackendReply, ChatBackend, ChatRequest, FinishReason, GatewayError};

/// Predicate over a chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Any,
    /// Some message contains the substring.
    Contains(String),
    /// The last message contains the substring.
    LastContains(String),
    /// The first user message contains the substring.
    TaskContains(String),
    ModelTag(String),
    /// Some message carries the attachment reference.
    Attachment(String),
    All(Vec<Matcher>),
    Not(Box<Matcher>),
}

impl Matcher {
    pub fn matches(&self, req: &ChatRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Contains(s) => req.messages.iter().any(|m| m.content.contains(s.as_str())),
            Matcher::LastContains(s) => req
                .messages
                .last()
                .is_some_and(|m| m.content.contains(s.as_str())),
            Matcher::TaskContains(s) => req.task_text().contains(s.as_str()),
            Matcher::ModelTag(t) => req.model_tag == *t,
            Matcher::Attachment(a) => req
                .messages
                .iter()
                .any(|m| m.attachments.iter().any(|x| x == a)),
            Matcher::All(ms) => ms.iter().all(|m| m.matches(req)),
            Matcher::Not(m) => !m.matches(req),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptOutcome {
    Reply {
        reply: String,
        #[serde(default, skip_serializing_if = "is_complete")]
        finish: FinishReason,
    },
    /// Simulated transient backend failure.
    Fail { fail: String },
}

fn is_complete(f: &FinishReason) -> bool {
    *f == FinishReason::Complete
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub when: Matcher,
    #[serde(flatten)]
    pub outcome: ScriptOutcome,
    /// Persistent entries are never consumed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub persistent: bool,
}

impl ScriptEntry {
    pub fn reply(when: Matcher, text: impl Into<String>) -> Self {
        Self {
            when,
            outcome: ScriptOutcome::Reply {
                reply: text.into(),
                finish: FinishReason::Complete,
            },
            persistent: false,
        }
    }

    pub fn fail(when: Matcher, message: impl Into<String>) -> Self {
        Self {
            when,
            outcome: ScriptOutcome::Fail {
                fail: message.into(),
            },
            persistent: false,
        }
    }

    pub fn persistent(mut self) -> Self {
        self.persistent = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionPolicy {
    #[default]
    Error,
    RepeatLast,
}

/// Ordered canned responses. A request consumes the first unconsumed entry
/// whose matcher accepts it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseScript {
    #[serde(default)]
    pub exhaustion: ExhaustionPolicy,
    pub entries: Vec<ScriptEntry>,
}

impl ResponseScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            exhaustion: ExhaustionPolicy::Error,
            entries,
        }
    }

    pub fn repeat_last(mut self) -> Self {
        self.exhaustion = ExhaustionPolicy::RepeatLast;
        self
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::ScriptLoad(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::ScriptLoad(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_sha256: String,
    pub model_tag: String,
    pub entry: Option<usize>,
    pub response: String,
}

#[derive(Debug, Default)]
struct ScriptState {
    consumed: Vec<bool>,
    last_used: Option<usize>,
    transcript: Vec<TranscriptEntry>,
}

/// Deterministic backend replaying a [`ResponseScript`]. Matcher evaluation
/// is serialized so concurrent callers observe script order.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: ResponseScript,
    state: Mutex<ScriptState>,
}

pub fn make_scripted_backend(script: ResponseScript) -> Result<ScriptedBackend, GatewayError> {
    if script.entries.is_empty() {
        return Err(GatewayError::EmptyScript);
    }
    let consumed = vec![false; script.entries.len()];
    Ok(ScriptedBackend {
        script,
        state: Mutex::new(ScriptState {
            consumed,
            ..Default::default()
        }),
    })
}

fn digest(req: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(req).expect("request serializes");
    hex::encode(Sha256::digest(bytes))
}

impl ScriptedBackend {
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        make_scripted_backend(ResponseScript::load(path)?)
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.state.lock().expect("script state poisoned").transcript.clone()
    }

    /// Makes every entry available again. The transcript is kept.
    pub fn reset(&self) {
        let mut st = self.state.lock().expect("script state poisoned");
        st.consumed.iter_mut().for_each(|c| *c = false);
        st.last_used = None;
    }

    /// Entries that were never consumed, by index.
    pub fn unconsumed(&self) -> Vec<usize> {
        let st = self.state.lock().expect("script state poisoned");
        st.consumed
            .iter()
            .enumerate()
            .filter(|(i, c)| !**c && !self.script.entries[*i].persistent)
            .map(|(i, _)| i)
            .collect()
    }
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, BackendFailure> {
        let mut st = self.state.lock().expect("script state poisoned");
        let hit = self
            .script
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !st.consumed[*i] && e.when.matches(request))
            .map(|(i, _)| i);
        let chosen = match hit {
            Some(i) => {
                if !self.script.entries[i].persistent {
                    st.consumed[i] = true;
                }
                Some(i)
            }
            None => match self.script.exhaustion {
                ExhaustionPolicy::Error => None,
                ExhaustionPolicy::RepeatLast => st
                    .last_used
                    .filter(|i| self.script.entries[*i].when.matches(request)),
            },
        };
        let request_sha256 = digest(request);
        let Some(i) = chosen else {
            st.transcript.push(TranscriptEntry {
                request_sha256,
                model_tag: request.model_tag.clone(),
                entry: None,
                response: "<script miss>".into(),
            });
            let preview: String = request.task_text().chars().take(80).collect();
            return Err(BackendFailure::ScriptMiss(format!(
                "no entry for model_tag '{}' task '{preview}'",
                request.model_tag
            )));
        };
        st.last_used = Some(i);
        let (result, shown) = match &self.script.entries[i].outcome {
            ScriptOutcome::Reply { reply, finish } => (
                Ok(BackendReply {
                    text: reply.clone(),
                    finish_reason: *finish,
                }),
                reply.clone(),
            ),
            ScriptOutcome::Fail { fail } => {
                (Err(BackendFailure::Transient(fail.clone())), format!("<fail: {fail}>"))
            }
        };
        st.transcript.push(TranscriptEntry {
            request_sha256,
            model_tag: request.model_tag.clone(),
            entry: Some(i),
            response: shown,
        });
        result
    }
}
