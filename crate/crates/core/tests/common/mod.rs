#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use unicode_normalization::UnicodeNormalization;

use goalact::backend::{Backend, BackendError, Completion, CompletionRequest};
use goalact::env::{AggregateOp, Category, GeneratedTask, Scalar, TaskShape};
use goalact::plan::{GlobalPlan, PlanStep, SkillAction, SkillKind, StepStatus};

pub const CATEGORIES: [Category; 7] = [
    Category::Hop(1),
    Category::Hop(2),
    Category::Hop(3),
    Category::Hop(4),
    Category::Hop(5),
    Category::Writing,
    Category::Aggregation,
];

// ---- planner output fuzzing ----

const KIND_SPELLINGS: [(&str, Option<SkillKind>); 9] = [
    ("Searching", Some(SkillKind::Searching)),
    ("searching", Some(SkillKind::Searching)),
    ("CODING", Some(SkillKind::Coding)),
    ("Writing", Some(SkillKind::Writing)),
    ("Finish", Some(SkillKind::Finish)),
    ("finish", Some(SkillKind::Finish)),
    ("Fly", None),
    ("Reasoning", None),
    ("Search_v2", None),
];

#[derive(Debug, Clone)]
pub struct FuzzStep {
    pub thought: String,
    pub spelling: &'static str,
    pub kind: Option<SkillKind>,
    /// Raw text between the brackets, `None` for a bare kind.
    pub objective: Option<String>,
}

impl FuzzStep {
    fn action_text(&self) -> String {
        match &self.objective {
            Some(o) => format!("{}[{o}]", self.spelling),
            None => self.spelling.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    None,
    Fenced,
    Prose,
    ExtraKey(usize),
    MissingAction(usize),
    NotArray,
    Garbage,
}

#[derive(Debug, Clone)]
pub struct FuzzPlan {
    pub steps: Vec<FuzzStep>,
    pub corruption: Corruption,
}

fn word(rng: &mut ChaCha8Rng) -> String {
    const POOL: [&str; 12] = [
        "Party", "table", "id=7", "lookup", "sum", "défendant", "\"quoted\"", "a,b", "x_y", "LAW-3", "名称", "{k}",
    ];
    POOL.choose(rng).unwrap().to_string()
}

fn phrase(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(1..=max);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

impl FuzzPlan {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let len = match rng.random_range(0..20) {
            0 => 0,
            1 => rng.random_range(13..=16),
            _ => rng.random_range(1..=6),
        };
        let mut steps: Vec<FuzzStep> = (0..len)
            .map(|_| {
                let (spelling, kind) = if rng.random_bool(0.92) {
                    KIND_SPELLINGS[..4].choose(rng).unwrap().clone()
                } else {
                    KIND_SPELLINGS.choose(rng).unwrap().clone()
                };
                let objective = match rng.random_range(0..12) {
                    0 => None,
                    1 => Some(String::new()),
                    2 => Some("   ".into()),
                    _ => Some(phrase(rng, 4)),
                };
                FuzzStep {
                    thought: phrase(rng, 5),
                    spelling,
                    kind,
                    objective,
                }
            })
            .collect();
        // most plans end in Finish, like real planner output
        if !steps.is_empty() && rng.random_bool(0.8) {
            let last = steps.last_mut().unwrap();
            last.spelling = "Finish";
            last.kind = Some(SkillKind::Finish);
            if rng.random_bool(0.5) {
                last.objective = None;
            }
        }
        let corruption = match rng.random_range(0..20) {
            0 => Corruption::Fenced,
            1 => Corruption::Prose,
            2 if !steps.is_empty() => Corruption::ExtraKey(rng.random_range(0..steps.len())),
            3 if !steps.is_empty() => Corruption::MissingAction(rng.random_range(0..steps.len())),
            4 => Corruption::NotArray,
            5 => Corruption::Garbage,
            _ => Corruption::None,
        };
        Self { steps, corruption }
    }

    pub fn render(&self) -> String {
        let items: Vec<serde_json::Value> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| match self.corruption {
                Corruption::ExtraKey(j) if i == j => {
                    json!({"Thinking": s.thought, "Action": s.action_text(), "Extra": 1})
                }
                Corruption::MissingAction(j) if i == j => json!({"Thinking": s.thought}),
                _ => json!({"Thinking": s.thought, "Action": s.action_text()}),
            })
            .collect();
        let array = serde_json::to_string_pretty(&items).unwrap();
        match self.corruption {
            Corruption::Fenced => format!("```json\n{array}\n```"),
            Corruption::Prose => format!("Here is the plan:\n{array}\nGood luck."),
            Corruption::NotArray => json!({"Thinking": "t", "Action": "Finish"}).to_string(),
            Corruption::Garbage => "I think we should look up the party first.".to_string(),
            _ => array,
        }
    }

    /// Outcome of planning on top of `executed` already-executed steps, as
    /// (kind, objective) pairs of the new pending steps, or the error text.
    pub fn expected(&self, executed: usize, max_len: usize) -> Result<Vec<(SkillKind, String)>, String> {
        let key_error = |index: usize, detail: &str| {
            format!("element {index} must have exactly the string keys \"Thinking\" and \"Action\": {detail}")
        };
        match self.corruption {
            Corruption::NotArray => return Err("response is not a JSON array: top level is not an array".into()),
            Corruption::Garbage => return Err("response is not a JSON array: ".into()),
            _ => {}
        }
        if self.steps.is_empty() {
            return Err("the plan is empty".into());
        }
        match self.corruption {
            Corruption::ExtraKey(i) => return Err(key_error(i, "unexpected key(s) Extra")),
            Corruption::MissingAction(i) => return Err(key_error(i, "Action is missing")),
            _ => {}
        }
        let mut out = Vec::new();
        for s in &self.steps {
            let Some(kind) = &s.kind else {
                return Err(format!("unknown skill {:?}", s.spelling));
            };
            out.push((kind.clone(), s.objective.as_deref().unwrap_or("").trim().to_string()));
        }
        for (i, (kind, objective)) in out.iter().enumerate() {
            if !kind.is_finish() && objective.is_empty() {
                return Err(format!("step {}: a {kind} action needs an objective", executed + i + 1));
            }
        }
        if !out.last().unwrap().0.is_finish() {
            return Err("plan does not end with a Finish action".into());
        }
        if let Some(i) = out[..out.len() - 1].iter().position(|(k, _)| k.is_finish()) {
            return Err(format!("Finish appears at step {}, before the last step", executed + i + 1));
        }
        if executed + out.len() > max_len {
            return Err(format!(
                "plan has {} steps, more than the limit of {max_len}",
                executed + out.len()
            ));
        }
        Ok(out)
    }
}

/// Error texts are compared exactly, except parser messages from the JSON
/// library, which are compared by prefix.
pub fn error_matches(expected: &str, actual: &str) -> bool {
    if expected.ends_with(": ") {
        actual.starts_with(expected)
    } else {
        expected == actual
    }
}

/// A plan with `n` executed Searching steps and one pending Finish.
pub fn executed_plan(n: usize, revision: u32) -> GlobalPlan {
    let mut steps: Vec<PlanStep> = (0..n)
        .map(|i| PlanStep {
            index: i as u32 + 1,
            thought: format!("earlier thought {i}"),
            action: SkillAction::new(SkillKind::Searching, format!("done-{i}")),
            status: StepStatus::Executed,
            observation: Some(format!("observation {i}")),
        })
        .collect();
    steps.push(PlanStep::pending(n as u32 + 1, "wrap up", SkillAction::finish()));
    GlobalPlan { revision, steps }
}

/// Structural invariants every accepted plan must satisfy, checked directly.
pub fn plan_invariants_hold(plan: &GlobalPlan, max_len: usize) -> Result<(), String> {
    let n = plan.steps.len();
    if n == 0 || n > max_len {
        return Err(format!("length {n}"));
    }
    let finishes = plan.steps.iter().filter(|s| s.action.kind == SkillKind::Finish).count();
    if finishes != 1 || plan.steps[n - 1].action.kind != SkillKind::Finish {
        return Err(format!("{finishes} Finish step(s), last is {}", plan.steps[n - 1].action.kind));
    }
    for (i, s) in plan.steps.iter().enumerate() {
        if s.index as usize != i + 1 {
            return Err(format!("index {} at position {i}", s.index));
        }
        if (s.status == StepStatus::Executed) != s.observation.is_some() {
            return Err(format!("status/observation mismatch at {}", s.index));
        }
        if s.action.kind != SkillKind::Finish && s.action.objective.trim().is_empty() {
            return Err(format!("empty objective at {}", s.index));
        }
    }
    let first_pending = plan.steps.iter().position(|s| s.status == StepStatus::Pending).unwrap_or(n);
    if plan.steps[first_pending..].iter().any(|s| s.status == StepStatus::Executed) {
        return Err("executed step after a pending one".into());
    }
    Ok(())
}

// ---- adversarial planner backend ----

/// Answers planning prompts with random plans that often re-echo the
/// executed steps, sometimes with altered text, and everything else with
/// noise. Used to check that executed history is never rewritten.
pub struct ChaosPlanner {
    rng: Mutex<ChaCha8Rng>,
}

impl ChaosPlanner {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

fn executed_actions(prompt: &str) -> Vec<String> {
    let chain = prompt.rsplit("Existing planning chain:").next().unwrap_or("");
    chain
        .lines()
        .filter_map(|l| l.strip_prefix("Action "))
        .filter_map(|l| l.split_once(": ").map(|(_, a)| a.to_string()))
        .collect()
}

impl Backend for ChaosPlanner {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut rng = self.rng.lock().unwrap();
        let prompt = request.prompt_text();
        let text = if prompt.starts_with("You are a planner") {
            let mut items = Vec::new();
            for a in executed_actions(&prompt) {
                match rng.random_range(0..3) {
                    0 => items.push(json!({"Thinking": "again", "Action": a})),
                    1 => items.push(json!({"Thinking": "rewrite", "Action": format!("Searching[rewritten {a}]")})),
                    _ => {}
                }
            }
            for _ in 0..rng.random_range(1..=3) {
                let kind = ["Searching", "Coding", "Writing"].choose(&mut *rng).unwrap();
                let n: u32 = rng.random_range(0..1000);
                items.push(json!({"Thinking": format!("try {n}"), "Action": format!("{kind}[probe {n}]")}));
            }
            if rng.random_bool(0.15) {
                items.clear();
            }
            items.push(json!({"Thinking": "done", "Action": "Finish"}));
            serde_json::to_string(&items).unwrap()
        } else {
            format!("noise {}", rng.random::<u32>())
        };
        Ok(Completion { text, attempts: 1 })
    }

    fn identity(&self) -> String {
        "scripted:chaos".into()
    }
}

// ---- brute-force oracles ----

/// Substring test by scanning every byte window of the NFC forms.
pub fn brute_contains(haystack: &str, needle: &str) -> bool {
    let h: String = haystack.nfc().collect();
    let n: String = needle.nfc().collect();
    let (h, n) = (h.as_bytes(), n.as_bytes());
    if n.is_empty() {
        return true;
    }
    (0..h.len()).any(|i| h.len() - i >= n.len() && (0..n.len()).all(|j| h[i + j] == n[j]))
}

/// Success rate over the distinct keywords, by brute force.
pub fn brute_success(keys: &[String], output: &str) -> f64 {
    let distinct: BTreeSet<&String> = keys.iter().collect();
    let hits = distinct.iter().filter(|k| brute_contains(output, k)).count();
    hits as f64 / distinct.len() as f64
}

pub enum Aggregate {
    Int(i64),
    Dec(f64),
}

/// Sum or mean computed straight from the fixture rows.
pub fn brute_aggregate(g: &GeneratedTask) -> Aggregate {
    let TaskShape::Aggregation {
        op,
        filter_table,
        filter_field,
        filter_value,
        join_field,
        value_table,
        value_field,
    } = &g.task.shape
    else {
        panic!("not an aggregation task");
    };
    let table = |name: &str| g.tables.iter().find(|t| t.name == *name).unwrap();
    let values = table(value_table);
    let mut total = 0i64;
    let mut n = 0i64;
    for row in &table(filter_table).rows {
        if row[filter_field.as_str()] != Scalar::text(filter_value.as_str()) {
            continue;
        }
        let key = &row[join_field.as_str()];
        let hit = values.rows.iter().find(|r| &r[join_field.as_str()] == key).unwrap();
        let Scalar::Int(v) = hit[value_field.as_str()] else {
            panic!("amounts are integers")
        };
        total += v;
        n += 1;
    }
    match op {
        AggregateOp::Sum => Aggregate::Int(total),
        // the sandbox keeps exact quotients integral
        AggregateOp::Mean if total % n == 0 => Aggregate::Int(total / n),
        AggregateOp::Mean => Aggregate::Dec(total as f64 / n as f64),
    }
}
