//! Few-shot exemplar banks, one per method.
//!
//! Exemplars are trajectories (in the trajectory log encoding) with their
//! raw exchanges stripped. A prompt uses the first `n` exemplars whose
//! actions only use enabled skills.

use std::collections::BTreeMap;

use crate::config::{Ablation, MethodKind, RunConfig};
use crate::env::generator::generate;
use crate::env::{Category, Environment};
use crate::oracle::task_backend;
use crate::orchestrator::{run_task, RunContext};
use crate::plan::{History, SkillKind};
use crate::skills::SkillRegistry;
use crate::trajectory::{read_jsonl, Trajectory};

const GOALACT: &str = include_str!("../assets/exemplars/goalact.jsonl");
const PLAN_AND_SOLVE: &str = include_str!("../assets/exemplars/plan_and_solve.jsonl");
const PLAN_AND_EXECUTE: &str = include_str!("../assets/exemplars/plan_and_execute.jsonl");
const REACT: &str = include_str!("../assets/exemplars/react.jsonl");
const CODEACT: &str = include_str!("../assets/exemplars/codeact.jsonl");

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExemplarBank {
    banks: BTreeMap<MethodKind, Vec<Trajectory>>,
}

impl ExemplarBank {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The banks shipped with the crate.
    pub fn builtin() -> Self {
        let mut banks = BTreeMap::new();
        for (m, text) in [
            (MethodKind::GoalAct, GOALACT),
            (MethodKind::PlanAndSolve, PLAN_AND_SOLVE),
            (MethodKind::PlanAndExecute, PLAN_AND_EXECUTE),
            (MethodKind::ReAct, REACT),
            (MethodKind::CodeAct, CODEACT),
        ] {
            banks.insert(m, read_jsonl(text).expect("bundled exemplars parse"));
        }
        Self { banks }
    }

    pub fn insert(&mut self, method: MethodKind, exemplars: Vec<Trajectory>) {
        self.banks.insert(method, exemplars);
    }

    pub fn get(&self, method: MethodKind) -> &[Trajectory] {
        self.banks.get(&method).map(Vec::as_slice).unwrap_or_default()
    }

    /// Rendered transcripts for a prompt's memory slot.
    pub fn select(&self, method: MethodKind, registry: &SkillRegistry, n: usize) -> Vec<String> {
        self.get(method)
            .iter()
            .filter(|t| compatible(&t.history, registry))
            .take(n)
            .map(|t| render_exemplar(method, t))
            .collect()
    }
}

fn compatible(history: &History, registry: &SkillRegistry) -> bool {
    history
        .entries
        .iter()
        .all(|e| e.action.kind.is_finish() || registry.is_enabled(&e.action.kind))
}

fn final_thought(t: &Trajectory) -> String {
    t.revisions
        .last()
        .and_then(|p| p.steps.last())
        .filter(|s| s.action.kind.is_finish())
        .map(|s| s.thought.clone())
        .unwrap_or_else(|| "The observations answer the question.".to_string())
}

/// Subtask listing used by the plan-then-execute baselines.
pub fn render_subtasks(history: &History) -> String {
    let mut out = String::new();
    for (i, e) in history.entries.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!("Step {n}: {}\nResult {n}: {}\n", e.action.objective, e.observation));
    }
    out
}

/// ReAct / CodeAct scratchpad: the action is shown as its raw text.
pub fn render_raw_actions(history: &History) -> String {
    let mut out = String::new();
    for (i, e) in history.entries.iter().enumerate() {
        let n = i + 1;
        let action = match e.action.kind {
            SkillKind::Coding => format!("\n```\n{}\n```", e.action.objective),
            _ => e.action.objective.clone(),
        };
        out.push_str(&format!(
            "Thought {n}: {}\nAction {n}: {action}\nObservation {n}: {}\n",
            e.thought, e.observation
        ));
    }
    out
}

pub fn render_exemplar(method: MethodKind, t: &Trajectory) -> String {
    let n = t.history.len() + 1;
    let answer = t.final_answer.clone().unwrap_or_default();
    match method {
        MethodKind::GoalAct => format!(
            "Question: {}\n{}Thought {n}: {}\nAction {n}: Finish",
            t.question,
            t.history.render(),
            final_thought(t)
        ),
        MethodKind::ReAct | MethodKind::CodeAct => format!(
            "Question: {}\n{}Thought {n}: {}\nAction {n}: Finish[{answer}]",
            t.question,
            render_raw_actions(&t.history),
            final_thought(t)
        ),
        MethodKind::PlanAndSolve | MethodKind::PlanAndExecute => {
            let plan: Vec<serde_json::Value> = t
                .revisions
                .first()
                .map(|p| {
                    p.steps
                        .iter()
                        .map(|s| {
                            let step = if s.action.kind.is_finish() {
                                "Finish".to_string()
                            } else {
                                s.action.objective.clone()
                            };
                            serde_json::json!({"Thinking": s.thought, "Step": step})
                        })
                        .collect()
                })
                .unwrap_or_default();
            format!(
                "Question: {}\nPlan: {}\n{}Answer: {answer}",
                t.question,
                serde_json::to_string(&plan).expect("json renders"),
                render_subtasks(&t.history)
            )
        }
    }
}

/// (category, seed, ablations) of each exemplar in a method's bank.
fn bank_spec(method: MethodKind) -> Vec<(Category, u64, Vec<Ablation>)> {
    match method {
        MethodKind::GoalAct => vec![
            (Category::Hop(2), 9001, vec![]),
            (Category::Aggregation, 9002, vec![]),
            (Category::Writing, 9003, vec![]),
            (Category::Hop(2), 9004, vec![Ablation::NoSearching]),
        ],
        MethodKind::CodeAct => vec![(Category::Hop(2), 9001, vec![]), (Category::Aggregation, 9002, vec![])],
        _ => vec![(Category::Hop(2), 9001, vec![]), (Category::Hop(3), 9005, vec![])],
    }
}

/// Rebuilds a method's bank from oracle runs on reserved seeds.
pub fn generate_bank(method: MethodKind) -> Vec<Trajectory> {
    bank_spec(method)
        .into_iter()
        .map(|(category, seed, ablations)| {
            let g = generate(category, seed);
            let config = RunConfig {
                exemplar_count: 0,
                ablations: ablations.into_iter().collect(),
                ..RunConfig::default()
            };
            let env = Environment::from_tables(g.tables.clone()).expect("generated tables are valid");
            let backend = task_backend(method, &config, &g.task);
            let empty = ExemplarBank::empty();
            let ctx = RunContext {
                env: &env,
                backend: &backend,
                config: &config,
                exemplars: &empty,
            };
            let mut t = run_task(method, &g.task, ctx).expect("default config is valid");
            t.exchanges.clear();
            t.tool_calls.clear();
            t.sandbox_runs.clear();
            t
        })
        .collect()
}

/// File name of a method's bank under `assets/exemplars`.
pub fn bank_file(method: MethodKind) -> String {
    format!("{}.jsonl", method.name())
}
