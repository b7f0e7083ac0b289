//! Global plan, step and history data model.
//!
//! A [`GlobalPlan`] is an ordered list of `(thought, action)` steps whose
//! last action is always `Finish`. Executed steps form a prefix and never
//! change once recorded; a re-plan may only rewrite the pending suffix.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::env::Scalar;

/// Default cap on the number of steps (executed plus pending) in a plan.
pub const DEFAULT_MAX_PLAN_LEN: usize = 12;
/// Default byte budget for a stored observation.
pub const DEFAULT_OBSERVATION_BUDGET: usize = 4096;
pub const TRUNCATION_MARKER: &str = "[truncated]";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkillKind {
    Searching,
    Coding,
    Writing,
    Finish,
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillKindError {
    #[error("skill kind identifiers must be non-empty")]
    Empty,
    #[error("skill kind {0:?} may only contain letters, digits, '_' and '-'")]
    BadCharacters(String),
}

impl SkillKind {
    pub const BUILTIN: [SkillKind; 4] = [
        SkillKind::Searching,
        SkillKind::Coding,
        SkillKind::Writing,
        SkillKind::Finish,
    ];

    /// Exact-name constructor; built-in names map to built-in kinds.
    pub fn from_name(name: &str) -> Result<Self, SkillKindError> {
        if name.is_empty() {
            return Err(SkillKindError::Empty);
        }
        if let Some(b) = Self::BUILTIN.iter().find(|b| b.as_str() == name) {
            return Ok(b.clone());
        }
        if !name
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-')
        {
            return Err(SkillKindError::BadCharacters(name.to_string()));
        }
        Ok(SkillKind::Custom(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        match self {
            SkillKind::Searching => "Searching",
            SkillKind::Coding => "Coding",
            SkillKind::Writing => "Writing",
            SkillKind::Finish => "Finish",
            SkillKind::Custom(s) => s,
        }
    }

    pub fn is_finish(&self) -> bool {
        matches!(self, SkillKind::Finish)
    }
}

impl fmt::Display for SkillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for SkillKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SkillKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SkillKind::from_name(&s).map_err(serde::de::Error::custom)
    }
}

/// Value stored in an action payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PayloadValue {
    Scalar(Scalar),
    List(Vec<Scalar>),
}

pub type Payload = BTreeMap<String, PayloadValue>;

/// A high-level skill invocation: what the planner emits and the executor
/// dispatches. `payload` is filled in by the executing skill only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillAction {
    pub kind: SkillKind,
    pub objective: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
}

impl SkillAction {
    pub fn new(kind: SkillKind, objective: impl Into<String>) -> Self {
        Self {
            kind,
            objective: objective.into(),
            payload: None,
        }
    }

    pub fn finish() -> Self {
        Self::new(SkillKind::Finish, "")
    }
}

impl fmt::Display for SkillAction {
    /// `Kind[objective]`, or bare `Finish` when a Finish has no objective.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.objective.is_empty() {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "{}[{}]", self.kind, self.objective)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Executed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: u32,
    pub thought: String,
    pub action: SkillAction,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl PlanStep {
    pub fn pending(index: u32, thought: impl Into<String>, action: SkillAction) -> Self {
        Self {
            index,
            thought: thought.into(),
            action,
            status: StepStatus::Pending,
            observation: None,
        }
    }

    pub fn is_executed(&self) -> bool {
        self.status == StepStatus::Executed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlan {
    pub revision: u32,
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("plan has no steps")]
    Empty,
    #[error("plan does not end with a Finish action")]
    MissingFinish,
    #[error("Finish appears at step {index}, before the last step")]
    PrematureFinish { index: u32 },
    #[error("step indices must run 1..=n, found {found} at position {expected}")]
    NonContiguousIndices { expected: u32, found: u32 },
    #[error("step {index} is executed after a pending step")]
    ExecutedNotPrefix { index: u32 },
    #[error("step {index}: status and observation disagree")]
    StatusMismatch { index: u32 },
    #[error("step {index}: a {kind} action needs an objective")]
    EmptyObjective { index: u32, kind: String },
    #[error("plan has {len} steps, more than the limit of {max}")]
    TooLong { len: usize, max: usize },
    #[error("no pending step to execute")]
    NothingPending,
}

/// Checks every plan invariant and returns the plan unchanged if they hold.
///
/// Order of checks: structure (empty, indices, status, prefix), objectives,
/// terminal Finish, premature Finish, length.
pub fn validate_plan(plan: GlobalPlan, max_len: usize) -> Result<GlobalPlan, PlanError> {
    plan.check(max_len)?;
    Ok(plan)
}

impl GlobalPlan {
    pub fn check(&self, max_len: usize) -> Result<(), PlanError> {
        if self.steps.is_empty() {
            return Err(PlanError::Empty);
        }
        let mut seen_pending = false;
        for (pos, step) in self.steps.iter().enumerate() {
            let expected = pos as u32 + 1;
            if step.index != expected {
                return Err(PlanError::NonContiguousIndices {
                    expected,
                    found: step.index,
                });
            }
            if step.is_executed() != step.observation.is_some() {
                return Err(PlanError::StatusMismatch { index: step.index });
            }
            if step.is_executed() && seen_pending {
                return Err(PlanError::ExecutedNotPrefix { index: step.index });
            }
            seen_pending |= !step.is_executed();
        }
        for step in &self.steps {
            if !step.action.kind.is_finish() && step.action.objective.trim().is_empty() {
                return Err(PlanError::EmptyObjective {
                    index: step.index,
                    kind: step.action.kind.to_string(),
                });
            }
        }
        let last = self.steps.last().expect("non-empty");
        if !last.action.kind.is_finish() {
            return Err(PlanError::MissingFinish);
        }
        if let Some(early) = self.steps[..self.steps.len() - 1]
            .iter()
            .find(|s| s.action.kind.is_finish())
        {
            return Err(PlanError::PrematureFinish { index: early.index });
        }
        if self.steps.len() > max_len {
            return Err(PlanError::TooLong {
                len: self.steps.len(),
                max: max_len,
            });
        }
        Ok(())
    }

    pub fn executed_len(&self) -> usize {
        self.steps.iter().take_while(|s| s.is_executed()).count()
    }

    pub fn pending_len(&self) -> usize {
        self.steps.iter().filter(|s| !s.is_executed()).count()
    }

    /// Builds the next revision: this plan's executed prefix followed by
    /// `pending`, re-indexed contiguously.
    pub fn splice(&self, pending: Vec<(String, SkillAction)>, revision: u32) -> GlobalPlan {
        let mut steps: Vec<PlanStep> = self
            .steps
            .iter()
            .take_while(|s| s.is_executed())
            .cloned()
            .collect();
        let offset = steps.len() as u32;
        steps.extend(
            pending
                .into_iter()
                .enumerate()
                .map(|(i, (thought, action))| PlanStep::pending(offset + i as u32 + 1, thought, action)),
        );
        GlobalPlan { revision, steps }
    }

    pub fn from_pending(pending: Vec<(String, SkillAction)>, revision: u32) -> GlobalPlan {
        GlobalPlan {
            revision,
            steps: Vec::new(),
        }
        .splice(pending, revision)
    }

    /// Returns a copy with the first pending step marked executed.
    pub fn with_first_executed(
        &self,
        observation: String,
        payload: Option<Payload>,
    ) -> Result<GlobalPlan, PlanError> {
        let mut next = self.clone();
        let step = next
            .steps
            .iter_mut()
            .find(|s| !s.is_executed())
            .ok_or(PlanError::NothingPending)?;
        step.status = StepStatus::Executed;
        step.observation = Some(observation);
        if payload.is_some() {
            step.action.payload = payload;
        }
        Ok(next)
    }
}

/// One executed `(thought, action, observation)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub thought: String,
    pub action: SkillAction,
    pub observation: String,
}

/// The fixed record of executed steps at a point in the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    pub entries: Vec<HistoryEntry>,
}

impl History {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        self.entries.push(entry);
    }

    pub fn last_observation(&self) -> Option<&str> {
        self.entries.last().map(|e| e.observation.as_str())
    }

    pub fn is_prefix_of(&self, other: &History) -> bool {
        self.entries.len() <= other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a == b)
    }

    /// `Thought i / Action i / Observation i` lines, one block per entry.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let n = i + 1;
            out.push_str(&format!(
                "Thought {n}: {}\nAction {n}: {}\nObservation {n}: {}\n",
                e.thought, e.action, e.observation
            ));
        }
        out
    }
}

pub fn history_of(plan: &GlobalPlan) -> History {
    History {
        entries: plan
            .steps
            .iter()
            .take_while(|s| s.is_executed())
            .map(|s| HistoryEntry {
                thought: s.thought.clone(),
                action: s.action.clone(),
                observation: s.observation.clone().unwrap_or_default(),
            })
            .collect(),
    }
}

pub fn first_pending(plan: &GlobalPlan) -> Option<&PlanStep> {
    plan.steps.iter().find(|s| !s.is_executed())
}

/// Cuts `text` to at most `budget` bytes on a char boundary, ending with
/// [`TRUNCATION_MARKER`] when anything was removed.
pub fn truncate_observation(text: &str, budget: usize) -> String {
    if text.len() <= budget {
        return text.to_string();
    }
    let keep = budget.saturating_sub(TRUNCATION_MARKER.len() + 1);
    let mut cut = keep;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{} {TRUNCATION_MARKER}", &text[..cut])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(kinds: &[SkillKind]) -> GlobalPlan {
        GlobalPlan::from_pending(
            kinds
                .iter()
                .map(|k| {
                    let objective = if k.is_finish() { "" } else { "look it up" };
                    ("think".to_string(), SkillAction::new(k.clone(), objective))
                })
                .collect(),
            1,
        )
    }

    #[test]
    fn searching_then_finish_is_valid() {
        let p = plan(&[SkillKind::Searching, SkillKind::Finish]);
        assert_eq!(validate_plan(p.clone(), 12), Ok(p));
    }

    #[test]
    fn missing_finish() {
        let p = plan(&[SkillKind::Searching]);
        assert_eq!(validate_plan(p, 12), Err(PlanError::MissingFinish));
    }

    #[test]
    fn premature_finish() {
        let p = plan(&[SkillKind::Finish, SkillKind::Searching, SkillKind::Finish]);
        assert_eq!(validate_plan(p, 12), Err(PlanError::PrematureFinish { index: 1 }));
    }

    #[test]
    fn non_contiguous_indices() {
        let mut p = plan(&[SkillKind::Searching, SkillKind::Finish]);
        p.steps[1].index = 3;
        assert_eq!(
            validate_plan(p, 12),
            Err(PlanError::NonContiguousIndices { expected: 2, found: 3 })
        );
    }

    #[test]
    fn executed_must_be_prefix() {
        let mut p = plan(&[SkillKind::Searching, SkillKind::Coding, SkillKind::Finish]);
        p.steps[1].status = StepStatus::Executed;
        p.steps[1].observation = Some("obs".into());
        assert_eq!(validate_plan(p, 12), Err(PlanError::ExecutedNotPrefix { index: 2 }));
    }

    #[test]
    fn too_long() {
        let mut kinds = vec![SkillKind::Searching; 12];
        kinds.push(SkillKind::Finish);
        assert_eq!(
            validate_plan(plan(&kinds), 12),
            Err(PlanError::TooLong { len: 13, max: 12 })
        );
    }

    #[test]
    fn history_and_first_pending() {
        let p = plan(&[
            SkillKind::Searching,
            SkillKind::Searching,
            SkillKind::Coding,
            SkillKind::Finish,
        ]);
        assert!(history_of(&p).is_empty());
        assert_eq!(first_pending(&p).unwrap().index, 1);

        let p = p
            .with_first_executed("o1".into(), None)
            .unwrap()
            .with_first_executed("o2".into(), None)
            .unwrap();
        let h = history_of(&p);
        assert_eq!(h.len(), 2);
        assert_eq!(h.entries[1].observation, "o2");
        assert_eq!(first_pending(&p).unwrap().index, 3);

        let p = p.with_first_executed("o3".into(), None).unwrap();
        assert_eq!(history_of(&p).len(), 3);
        assert!(first_pending(&p).unwrap().action.kind.is_finish());

        let done = p.with_first_executed("end".into(), None).unwrap();
        assert!(first_pending(&done).is_none());
    }

    #[test]
    fn splice_keeps_executed_prefix() {
        let p = plan(&[SkillKind::Searching, SkillKind::Searching, SkillKind::Finish])
            .with_first_executed("o1".into(), None)
            .unwrap();
        let next = p.splice(
            vec![
                ("new".into(), SkillAction::new(SkillKind::Writing, "draft")),
                ("done".into(), SkillAction::finish()),
            ],
            2,
        );
        assert_eq!(next.steps.len(), 3);
        assert_eq!(next.steps[0], p.steps[0]);
        assert_eq!(next.steps[1].index, 2);
        assert_eq!(next.revision, 2);
        next.check(12).unwrap();
    }

    #[test]
    fn truncation_respects_budget_and_char_boundaries() {
        let text = "é".repeat(100);
        let t = truncate_observation(&text, 50);
        assert!(t.len() <= 50);
        assert!(t.ends_with(TRUNCATION_MARKER));
        assert_eq!(truncate_observation("short", 50), "short");
    }

    #[test]
    fn skill_kind_names() {
        assert_eq!(SkillKind::from_name("Finish").unwrap(), SkillKind::Finish);
        assert_eq!(
            SkillKind::from_name("Reasoning").unwrap(),
            SkillKind::Custom("Reasoning".into())
        );
        assert_eq!(SkillKind::from_name(""), Err(SkillKindError::Empty));
        assert!(SkillKind::from_name("a[b").is_err());
    }

    #[test]
    fn action_display() {
        assert_eq!(SkillAction::finish().to_string(), "Finish");
        assert_eq!(
            SkillAction::new(SkillKind::Searching, "Company by name=X").to_string(),
            "Searching[Company by name=X]"
        );
    }
}
