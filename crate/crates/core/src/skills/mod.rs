//! Skill registry and dispatch.
//!
//! Searching, Coding and Writing have built-in executors; custom kinds run a
//! generic single-call executor driven by their description. Finish is
//! listed for the planner but handled by the control loop.

mod coding;
mod custom;
mod searching;
mod writing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::env::{Environment, ToolError};
use crate::plan::{History, Payload, SkillAction, SkillKind};
use crate::prompts::count_word;
use crate::sandbox::{Fault, SandboxLimits};
use crate::trajectory::Session;

pub use coding::{exec_coding, extract_script};
pub use custom::exec_custom;
pub use searching::{exec_searching, parse_tool_calls, render_tool_result};
pub use writing::{budget_history, exec_writing};
pub(crate) use coding::run_script;
pub(crate) use searching::run_call;

pub const DEFAULT_WRITING_BUDGET: usize = 12_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillDescriptor {
    pub kind: SkillKind,
    pub description: String,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("skill {0} is already registered")]
    DuplicateSkill(String),
    #[error("skill {0} is reserved")]
    ReservedKind(String),
    #[error("skill {0} is not registered")]
    SkillUnknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillRegistry {
    entries: Vec<SkillDescriptor>,
}

impl Default for SkillRegistry {
    fn default() -> Self {
        let d = |kind: SkillKind, description: &str| SkillDescriptor {
            kind,
            description: description.to_string(),
            enabled: true,
        };
        Self {
            entries: vec![
                d(
                    SkillKind::Searching,
                    "Retrieve a record from a data table based on information, or filter multiple records that meet specific attribute values.",
                ),
                d(
                    SkillKind::Coding,
                    "If the problem is too complex to be solved by querying alone, you may attempt to program a solution. You can filter, sort, sum, or iterate over queried data.",
                ),
                d(
                    SkillKind::Writing,
                    "If content generation (such as a defense statement) is needed, you should attempt writing to resolve the issue.",
                ),
                d(SkillKind::Finish, "Provide the final answer and terminate the task."),
            ],
        }
    }
}

impl SkillRegistry {
    pub fn register_skill(&mut self, kind: SkillKind, description: impl Into<String>) -> Result<(), RegistryError> {
        if kind.is_finish() {
            return Err(RegistryError::ReservedKind(kind.to_string()));
        }
        if self.entries.iter().any(|e| e.kind == kind) {
            return Err(RegistryError::DuplicateSkill(kind.to_string()));
        }
        let at = self.entries.len() - 1;
        self.entries.insert(
            at,
            SkillDescriptor {
                kind,
                description: description.into(),
                enabled: true,
            },
        );
        Ok(())
    }

    pub fn set_enabled(&mut self, kind: &SkillKind, enabled: bool) -> Result<(), RegistryError> {
        if kind.is_finish() {
            return Err(RegistryError::ReservedKind(kind.to_string()));
        }
        let e = self
            .entries
            .iter_mut()
            .find(|e| &e.kind == kind)
            .ok_or_else(|| RegistryError::SkillUnknown(kind.to_string()))?;
        e.enabled = enabled;
        Ok(())
    }

    pub fn descriptors(&self) -> &[SkillDescriptor] {
        &self.entries
    }

    pub fn descriptor(&self, kind: &SkillKind) -> Option<&SkillDescriptor> {
        self.entries.iter().find(|e| &e.kind == kind)
    }

    pub fn is_enabled(&self, kind: &SkillKind) -> bool {
        self.descriptor(kind).is_some_and(|d| d.enabled)
    }

    /// Enabled kinds in prompt order, Finish last.
    pub fn enabled(&self) -> Vec<SkillKind> {
        self.entries.iter().filter(|e| e.enabled).map(|e| e.kind.clone()).collect()
    }

    pub fn has_executable_skill(&self) -> bool {
        self.entries.iter().any(|e| e.enabled && !e.kind.is_finish())
    }

    /// Case-insensitive lookup of an enabled kind by name.
    pub fn resolve(&self, name: &str) -> Option<SkillKind> {
        self.entries
            .iter()
            .find(|e| e.enabled && e.kind.as_str().eq_ignore_ascii_case(name))
            .map(|e| e.kind.clone())
    }

    /// The numbered action-type list and its spelled-out count.
    pub fn action_types_prompt(&self) -> (String, String) {
        let lines: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.enabled)
            .enumerate()
            .map(|(i, e)| format!("{}. {}: {}", i + 1, e.kind, e.description))
            .collect();
        (lines.join("\n"), count_word(lines.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillConfig {
    pub sandbox: SandboxLimits,
    pub writing_budget: usize,
}

impl Default for SkillConfig {
    fn default() -> Self {
        Self {
            sandbox: SandboxLimits::default(),
            writing_budget: DEFAULT_WRITING_BUDGET,
        }
    }
}

/// Everything an executor may read or log to.
pub struct SkillContext<'c, 's> {
    pub question: &'c str,
    pub history: &'c History,
    pub env: &'c Environment,
    pub tables: &'c [String],
    pub config: &'c SkillConfig,
    pub session: &'c mut Session<'s>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkillError {
    Tool { error: ToolError },
    MalformedCall { reason: String },
    Backend { error: BackendError },
    Sandbox { fault: Fault },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillOutcome {
    pub observation: String,
    pub tool_calls_made: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<SkillError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
}

impl SkillOutcome {
    fn backend_failure(skill: &str, e: BackendError) -> Self {
        Self {
            observation: format!("{skill} failed: {e}"),
            tool_calls_made: 0,
            error: Some(SkillError::Backend { error: e }),
            payload: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("skill {0} is disabled")]
    SkillDisabled(String),
    #[error("skill {0} is not registered")]
    SkillUnknown(String),
    #[error("Finish is handled by the control loop, not dispatched")]
    FinishNotDispatchable,
}

pub fn dispatch(
    registry: &SkillRegistry,
    action: &SkillAction,
    ctx: &mut SkillContext<'_, '_>,
) -> Result<SkillOutcome, DispatchError> {
    let desc = registry
        .descriptor(&action.kind)
        .ok_or_else(|| DispatchError::SkillUnknown(action.kind.to_string()))?;
    if !desc.enabled {
        return Err(DispatchError::SkillDisabled(action.kind.to_string()));
    }
    let mut outcome = match &action.kind {
        SkillKind::Finish => return Err(DispatchError::FinishNotDispatchable),
        SkillKind::Searching => exec_searching(&action.objective, ctx),
        SkillKind::Coding => exec_coding(&action.objective, ctx),
        SkillKind::Writing => exec_writing(&action.objective, ctx),
        SkillKind::Custom(name) => exec_custom(name, &desc.description, &action.objective, ctx),
    };
    if outcome.observation.trim().is_empty() {
        outcome.observation = format!("{} produced no output.", action.kind);
    }
    Ok(outcome)
}
