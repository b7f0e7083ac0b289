//! Pluggable completion providers.
//!
//! [`Backend`] is the single seam between the agent and a language model.
//! Tests and oracle runs use [`ScriptedBackend`]; live runs use
//! [`HttpBackend`]; [`RecordingBackend`] and [`ReplayBackend`] persist and
//! replay live sessions.

mod cassette;
mod http;
mod rate;
mod scripted;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{CassetteEntry, RecordingBackend, ReplayBackend};
pub use http::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL, HttpBackend, HttpConfig, HttpReply, Transport, TransportError, UreqTransport};
pub use rate::TokenBucket;
pub use scripted::{Matcher, Rule, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    /// All message contents joined by newlines; what scripted matchers see.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Cassette key: SHA-256 over the model and the whitespace-normalized
    /// messages.
    pub fn request_hash(&self) -> String {
        hash_messages(Some(&self.model), &self.messages)
    }

    /// Scripted `prompt_hash` key: like [`Self::request_hash`] without the model.
    pub fn prompt_hash(&self) -> String {
        hash_messages(None, &self.messages)
    }
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn hash_messages(model: Option<&str>, messages: &[Message]) -> String {
    let mut h = Sha256::new();
    if let Some(m) = model {
        h.update(b"model:");
        h.update(normalize_whitespace(m).as_bytes());
        h.update(b"\n");
    }
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        h.update(role.as_bytes());
        h.update(b":");
        h.update(normalize_whitespace(&m.content).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Transport attempts spent, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: u32, reason: String },
    #[error("authentication failed: {reason}")]
    AuthFailure { reason: String },
    #[error("protocol error: {reason}")]
    Protocol { reason: String },
    #[error("no scripted rule matched the prompt{}", closest.as_ref().map(|c| format!(" (closest rule: {c})")).unwrap_or_default())]
    RuleMiss { closest: Option<String> },
    #[error("cassette has no response for request {hash}")]
    CassetteMiss { hash: String },
}

impl BackendError {
    /// Transient failures that may succeed on a later call.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable { .. })
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    /// Stable identity recorded in run manifests.
    fn identity(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}
