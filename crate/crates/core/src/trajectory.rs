//! Per-task run records and the session that fills them.
//!
//! A [`Trajectory`] is stored as one JSON document per line. Field names are
//! part of the on-disk format.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, CompletionRequest, Message};
use crate::env::{Record, ToolCall, ToolError};
use crate::plan::{GlobalPlan, History};
use crate::sandbox::SandboxResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Finish,
    MaxIterations,
    FatalError,
}

/// Why a backend call was made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Planning,
    NextStep,
    Searching,
    Coding,
    Writing,
    Skill(String),
    React,
    Codeact,
    Summarize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub seq: u32,
    pub purpose: Purpose,
    pub request: CompletionRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOrigin {
    Searching,
    Sandbox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    /// Iteration `t` the call was made in.
    pub step: u32,
    pub origin: CallOrigin,
    pub call: ToolCall,
    #[serde(default)]
    pub records: Vec<Record>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxRun {
    pub step: u32,
    pub script: String,
    pub result: SandboxResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Planning,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub method: String,
    pub question: String,
    pub revisions: Vec<GlobalPlan>,
    pub history: History,
    pub exchanges: Vec<Exchange>,
    pub tool_calls: Vec<ToolCallRecord>,
    pub sandbox_runs: Vec<SandboxRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default)]
    pub degraded: bool,
    pub step_count: u32,
    pub termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

impl Trajectory {
    /// Canonical single-line encoding.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trajectories serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn count_purpose(&self, purpose: &Purpose) -> usize {
        self.exchanges.iter().filter(|e| &e.purpose == purpose).count()
    }
}

pub fn read_jsonl(text: &str) -> Result<Vec<Trajectory>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Trajectory::from_line)
        .collect()
}

pub fn write_jsonl(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajectories {
        out.push_str(&t.to_line());
        out.push('\n');
    }
    out
}

/// Backend access plus the logs of one task run.
pub struct Session<'a> {
    backend: &'a dyn Backend,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub step: u32,
    pub exchanges: Vec<Exchange>,
    pub tool_calls: Vec<ToolCallRecord>,
    pub sandbox_runs: Vec<SandboxRun>,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn Backend, model: impl Into<String>, temperature: f64) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature,
            max_tokens: None,
            step: 0,
            exchanges: Vec::new(),
            tool_calls: Vec::new(),
            sandbox_runs: Vec::new(),
        }
    }

    /// Sends `messages` and logs the exchange whatever the outcome.
    pub fn complete(&mut self, purpose: Purpose, messages: Vec<Message>) -> Result<String, BackendError> {
        let request = CompletionRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let result = self.backend.complete(&request);
        let seq = self.exchanges.len() as u32 + 1;
        let (response, error, attempts) = match &result {
            Ok(c) => (Some(c.text.clone()), None, c.attempts),
            Err(e) => {
                let attempts = match e {
                    BackendError::Unavailable { attempts, .. } => *attempts,
                    _ => 1,
                };
                (None, Some(e.clone()), attempts)
            }
        };
        self.exchanges.push(Exchange {
            seq,
            purpose,
            request,
            response,
            error,
            attempts,
        });
        result.map(|c| c.text)
    }

    pub fn prompt(&mut self, purpose: Purpose, text: String) -> Result<String, BackendError> {
        self.complete(purpose, vec![Message::user(text)])
    }

    pub fn backend_identity(&self) -> String {
        self.backend.identity()
    }
}
