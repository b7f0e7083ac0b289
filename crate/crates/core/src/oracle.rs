//! Scripted oracle for generated tasks.
//!
//! For each task the oracle compiles substring rules that answer the real
//! prompts with the reference solution, so a run exercises the genuine
//! planner, parsers, skills and tools. Final answers are gated on evidence
//! actually being present in the trajectory: a method that never gathers
//! the facts is answered with "could not be determined".

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde_json::json;

use crate::backend::{Backend, BackendError, Completion, CompletionRequest, Rule, ScriptedBackend};
use crate::config::{Ablation, MethodKind, RunConfig};
use crate::env::{snake_case, AggregateOp, GoldHop, Task, TaskShape, ToolCall, ToolSemantics};
use crate::plan::{SkillAction, SkillKind};
use crate::prompts::{
    marker, CODEACT, CODING, PLANNER, PLANNER_STEP, PLAN_EXECUTE, PLAN_SOLVE, REACT, SEARCHING, SUMMARIZE, WRITING,
};
use crate::skills::SkillRegistry;

pub const ORACLE_IDENTITY: &str = "scripted:oracle";

/// One reference step. `generic` is how a planner would phrase the step
/// before the previous observation is known.
#[derive(Debug, Clone)]
struct Step {
    thought: String,
    action: SkillAction,
    generic: String,
    /// Searching steps: the call, and text that must already be visible
    /// before the generic phrasing can be resolved.
    call: Option<(ToolCall, String)>,
    /// Coding steps: the script.
    script: Option<String>,
}

impl Step {
    fn search(hop: &GoldHop, purpose: &str, needle: String) -> Self {
        let sem = hop.semantics;
        let verb = match sem {
            ToolSemantics::GetRecord => "Get the",
            ToolSemantics::FilterRecords => "Find every",
        };
        let call = ToolCall::new(
            &format!("{}_{}", sem.verb(), snake_case(&hop.table)),
            &hop.field,
            hop.value.as_str(),
        );
        Self {
            thought: format!("I need {purpose}."),
            action: SkillAction::new(
                SkillKind::Searching,
                format!("{verb} {} record whose {} is {}", hop.table, hop.field, hop.value),
            ),
            generic: format!("{verb} {} record for {purpose}", hop.table),
            call: Some((call, needle)),
            script: None,
        }
    }

    fn coding(thought: &str, objective: String, script: String) -> Self {
        Self {
            thought: thought.to_string(),
            generic: objective.clone(),
            action: SkillAction::new(SkillKind::Coding, objective),
            call: None,
            script: Some(script),
        }
    }

    fn writing(objective: &str) -> Self {
        Self {
            thought: "All facts are gathered; the statement can be drafted.".into(),
            action: SkillAction::new(SkillKind::Writing, objective),
            generic: objective.to_string(),
            call: None,
            script: None,
        }
    }
}

/// What the reference solution uses.
#[derive(Debug, Clone, Copy)]
struct Caps {
    searching: bool,
    coding: bool,
    writing: bool,
}

impl Caps {
    fn of(registry: &SkillRegistry) -> Self {
        Self {
            searching: registry.is_enabled(&SkillKind::Searching),
            coding: registry.is_enabled(&SkillKind::Coding),
            writing: registry.is_enabled(&SkillKind::Writing),
        }
    }

    fn for_method(method: MethodKind, config: &RunConfig) -> Self {
        match method {
            MethodKind::GoalAct => Self::of(&config.registry().unwrap_or_default()),
            MethodKind::CodeAct => Self {
                searching: false,
                coding: true,
                writing: false,
            },
            _ => Self {
                searching: true,
                coding: false,
                writing: false,
            },
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn fenced(script: &str) -> String {
    format!("```\n{script}\n```")
}

/// Everything the oracle knows about one task.
struct Solution {
    steps: Vec<Step>,
    /// (needles, answer) summary rules, most specific first.
    answers: Vec<(Vec<String>, String)>,
    /// Document the Writing step produces, with the facts it needs.
    document: Option<(Vec<String>, String)>,
}

fn khop_script(task: &Task, answer_field: &str, link_fields: &[String]) -> String {
    let mut lines = Vec::new();
    for (i, hop) in task.gold_path.iter().enumerate() {
        let value = if i == 0 {
            quote(&hop.value)
        } else {
            format!("r.{}", link_fields[i - 1])
        };
        lines.push(format!("r = get_record({}, {}, {value})", hop.table, hop.field));
    }
    lines.push(format!("return r.{answer_field}"));
    lines.join("\n")
}

fn aggregation_script(
    op: AggregateOp,
    filter: (&str, &str, &str),
    join_field: &str,
    value: (&str, &str),
) -> String {
    let (table, field, wanted) = filter;
    let (value_table, value_field) = value;
    let ret = match op {
        AggregateOp::Sum => "return total".to_string(),
        AggregateOp::Mean => "return total / len(rows)".to_string(),
    };
    format!(
        "rows = filter_records({table}, {field}, {})\ntotal = 0\nfor row in rows {{\n    entry = get_record({value_table}, {join_field}, row.{join_field})\n    total = total + entry.{value_field}\n}}\n{ret}",
        quote(wanted)
    )
}

fn writing_gather_script(task: &Task) -> String {
    let calls: Vec<String> = task
        .gold_path
        .iter()
        .map(|h| {
            let f = match h.semantics {
                ToolSemantics::GetRecord => "get_record",
                ToolSemantics::FilterRecords => "filter_records",
            };
            format!("    {f}({}, {}, {})", h.table, h.field, quote(&h.value))
        })
        .collect();
    format!("return [\n{}\n]", calls.join(",\n"))
}

fn document(task: &Task) -> String {
    let a = &task.key_answers;
    format!(
        "DEFENSE STATEMENT. The plaintiff holds identity number {}. The defendant holds identity number {} and resides at {}. \
         The defendant is represented by {} (license {}) of {}. The defense relies on statutes {}.",
        a[0],
        a[1],
        a[2],
        a[3],
        a[4],
        a[5],
        a[6..].join(" and ")
    )
}

fn solve(task: &Task, caps: Caps) -> Solution {
    let mut answers = Vec::new();
    let mut document_rule = None;
    let mut steps = Vec::new();
    match &task.shape {
        TaskShape::KHop {
            answer_field,
            answer_label,
            link_fields,
        } => {
            let answer = task.key_answers[0].clone();
            if caps.searching {
                for (i, hop) in task.gold_path.iter().enumerate() {
                    let purpose = if i == 0 {
                        format!("the {} record named in the question", hop.table)
                    } else {
                        format!("the {} record linked from step {i}", hop.table)
                    };
                    steps.push(Step::search(hop, &purpose, hop.value.clone()));
                }
            } else if caps.coding {
                steps.push(Step::coding(
                    "A single script can follow the whole chain.",
                    format!(
                        "Follow the chain of linked records from {} to the {answer_label}",
                        task.gold_path[0].value
                    ),
                    khop_script(task, answer_field, link_fields),
                ));
            }
            answers.push((vec![format!("\"{answer_field}\":{}", quote(&answer))], answer.clone()));
            answers.push((vec![format!("Result: {answer}")], answer.clone()));
        }
        TaskShape::Writing { .. } => {
            if caps.searching {
                let purposes = [
                    "the plaintiff's identity details",
                    "the defendant's identity details and address",
                    "the defendant's counsel",
                    "the statutes on the dispute topic",
                ];
                for (hop, purpose) in task.gold_path.iter().zip(purposes) {
                    steps.push(Step::search(hop, purpose, hop.value.clone()));
                }
            } else if caps.coding {
                steps.push(Step::coding(
                    "One script can fetch the parties, counsel and statutes.",
                    format!(
                        "Fetch parties {} and {}, the defendant's counsel and the statutes on {}",
                        task.gold_path[0].value, task.gold_path[1].value, task.gold_path[3].value
                    ),
                    writing_gather_script(task),
                ));
            }
            if caps.writing && !steps.is_empty() {
                steps.push(Step::writing(&format!(
                    "Draft the defense statement for defendant {} with the party identities, counsel and cited statutes",
                    task.gold_path[1].value
                )));
                let doc = document(task);
                document_rule = Some((task.key_answers.clone(), doc.clone()));
                answers.push((vec![doc.clone()], doc));
            }
            let statutes = task.key_answers[6..].to_vec();
            answers.push((statutes.clone(), format!("Applicable statutes: {}.", statutes.join(", "))));
        }
        TaskShape::Aggregation {
            op,
            filter_table,
            filter_field,
            filter_value,
            join_field,
            value_table,
            value_field,
        } => {
            let answer = task.key_answers[0].clone();
            if caps.coding {
                steps.push(Step::coding(
                    "Every docket needs its own ledger lookup; a loop in one script covers them all.",
                    format!(
                        "Compute the {} {value_field} over the dockets filed by {filter_value}",
                        op_word(*op)
                    ),
                    aggregation_script(
                        *op,
                        (filter_table, filter_field, filter_value),
                        join_field,
                        (value_table, value_field),
                    ),
                ));
            } else if caps.searching {
                steps.push(Step::search(
                    &task.gold_path[0],
                    "the dockets filed by the company",
                    filter_value.clone(),
                ));
                for (i, hop) in task.gold_path.iter().enumerate().skip(1) {
                    let purpose = format!("the ledger amount of docket {i}");
                    steps.push(Step::search(hop, &purpose, hop.value.clone()));
                }
            }
            answers.push((vec![format!("Result: {answer}")], answer));
        }
    }
    Solution {
        steps,
        answers,
        document: document_rule,
    }
}

fn op_word(op: AggregateOp) -> &'static str {
    match op {
        AggregateOp::Sum => "total",
        AggregateOp::Mean => "average",
    }
}

fn m(t: &crate::prompts::Template) -> String {
    marker(t).to_string()
}

fn plan_json(key: &str, steps: &[(String, String)]) -> String {
    let items: Vec<serde_json::Value> = steps.iter().map(|(t, a)| json!({"Thinking": t, key: a})).collect();
    format!("```json\n{}\n```", serde_json::to_string_pretty(&items).expect("json renders"))
}

fn finish_pair() -> (String, String) {
    ("The observations answer the question.".into(), "Finish".into())
}

/// Remaining plan after `done` executed steps: the next step concrete, the
/// rest generic, capped so the whole plan stays within `max_len` steps.
fn remaining(steps: &[Step], done: usize, max_len: usize, render: impl Fn(&SkillAction) -> String) -> Vec<(String, String)> {
    let room = max_len.saturating_sub(done + 1);
    let mut out: Vec<(String, String)> = steps[done..]
        .iter()
        .take(room)
        .enumerate()
        .map(|(i, s)| {
            let action = if i == 0 {
                s.action.clone()
            } else {
                SkillAction::new(s.action.kind.clone(), s.generic.clone())
            };
            (s.thought.clone(), render(&action))
        })
        .collect();
    out.push(finish_pair());
    out
}

fn question(task: &Task) -> String {
    format!("Question: {}", task.query)
}

fn search_rules(task: &Task, sol: &Solution, rules: &mut Vec<Rule>) {
    for (i, s) in sol.steps.iter().enumerate() {
        if let Some((call, needle)) = &s.call {
            let response = serde_json::to_string(&call).expect("calls serialize");
            rules.push(Rule::contains(
                format!("search-{}", i + 1),
                vec![m(&SEARCHING), question(task), format!("Objective: {}\n", s.action.objective)],
                response.clone(),
            ));
            rules.push(Rule::contains(
                format!("search-generic-{}", i + 1),
                vec![
                    m(&SEARCHING),
                    question(task),
                    format!("Objective: {}\n", s.generic),
                    needle.clone(),
                ],
                response,
            ));
        }
        if let Some(script) = &s.script {
            rules.push(Rule::contains(
                format!("coding-{}", i + 1),
                vec![m(&CODING), question(task), format!("Objective: {}\n", s.action.objective)],
                fenced(script),
            ));
        }
    }
    if let Some((facts, doc)) = &sol.document {
        let mut needles = vec![m(&WRITING), question(task)];
        needles.extend(facts.iter().cloned());
        rules.push(Rule::contains("writing", needles, doc.clone()));
    }
}

fn summary_rules(task: &Task, sol: &Solution, rules: &mut Vec<Rule>) {
    for (i, (needles, answer)) in sol.answers.iter().enumerate() {
        let mut all = vec![m(&SUMMARIZE), question(task)];
        all.extend(needles.iter().cloned());
        rules.push(Rule::contains(format!("summary-{}", i + 1), all, answer.clone()));
    }
    rules.push(Rule::contains(
        "summary-fallback",
        vec![m(&SUMMARIZE), question(task)],
        "The answer could not be determined from the available observations.",
    ));
}

fn goalact_rules(task: &Task, sol: &Solution, config: &RunConfig, rules: &mut Vec<Rule>) {
    let stepwise = config.ablations.contains(&Ablation::NoGlobalPlan);
    let template = if stepwise { &PLANNER_STEP } else { &PLANNER };
    let n = sol.steps.len();
    for done in (0..=n).rev() {
        let mut needles = vec![m(template), question(task)];
        if done > 0 {
            needles.push(format!("Action {done}: {}\n", sol.steps[done - 1].action));
        }
        let mut plan = remaining(&sol.steps, done, config.max_plan_len, |a| a.to_string());
        if stepwise {
            plan.truncate(1);
        }
        rules.push(Rule::contains(format!("plan-{done}"), needles, plan_json("Action", &plan)));
    }
}

fn plan_solve_rules(task: &Task, sol: &Solution, config: &RunConfig, rules: &mut Vec<Rule>) {
    let plan = remaining(&sol.steps, 0, config.max_plan_len, |a| a.objective.clone());
    rules.push(Rule::contains(
        "plan",
        vec![m(&PLAN_SOLVE), question(task)],
        plan_json("Step", &plan),
    ));
}

fn plan_execute_rules(task: &Task, sol: &Solution, config: &RunConfig, rules: &mut Vec<Rule>) {
    let n = sol.steps.len();
    for done in (0..=n).rev() {
        let mut needles = vec![m(&PLAN_EXECUTE), question(task)];
        if done > 0 {
            needles.push(format!("Step {done}: {}\n", sol.steps[done - 1].action.objective));
        }
        let plan = remaining(&sol.steps, done, config.max_plan_len, |a| a.objective.clone());
        rules.push(Rule::contains(format!("plan-{done}"), needles, plan_json("Step", &plan)));
    }
}

fn finish_text(sol: &Solution) -> String {
    sol.answers
        .last()
        .map(|(_, a)| a.clone())
        .unwrap_or_default()
}

fn react_rules(task: &Task, sol: &Solution, rules: &mut Vec<Rule>) {
    let calls: Vec<&ToolCall> = sol.steps.iter().filter_map(|s| s.call.as_ref().map(|(c, _)| c)).collect();
    for done in (0..=calls.len()).rev() {
        let mut needles = vec![m(&REACT), question(task)];
        if done > 0 {
            needles.push(format!("Action {done}: {}\n", calls[done - 1].react_form()));
        }
        let response = match calls.get(done) {
            Some(c) => format!("Thought: {}\nAction: {}", sol.steps[done].thought, c.react_form()),
            None => format!(
                "Thought: The observations answer the question.\nAction: Finish[{}]",
                finish_text(sol)
            ),
        };
        rules.push(Rule::contains(format!("react-{done}"), needles, response));
    }
}

fn codeact_rules(task: &Task, sol: &Solution, rules: &mut Vec<Rule>) {
    let Some(step) = sol.steps.first() else {
        return;
    };
    let script = step.script.clone().unwrap_or_default();
    let evidence: Vec<Vec<String>> = sol.answers.iter().map(|(n, _)| n.clone()).collect();
    for (i, needles) in evidence.into_iter().enumerate() {
        let mut all = vec![m(&CODEACT), question(task)];
        all.extend(needles);
        rules.push(Rule::contains(
            format!("codeact-finish-{i}"),
            all,
            format!(
                "Thought: The script output answers the question.\nAction: Finish[{}]",
                finish_text(sol)
            ),
        ));
    }
    rules.push(Rule::contains(
        "codeact-script",
        vec![m(&CODEACT), question(task)],
        format!("Thought: {}\n{}", step.thought, fenced(&script)),
    ));
}

/// The rules that make `method` solve `task` under `config`.
pub fn task_rules(method: MethodKind, config: &RunConfig, task: &Task) -> Vec<Rule> {
    let sol = solve(task, Caps::for_method(method, config));
    let mut rules = Vec::new();
    match method {
        MethodKind::GoalAct => goalact_rules(task, &sol, config, &mut rules),
        MethodKind::PlanAndSolve => plan_solve_rules(task, &sol, config, &mut rules),
        MethodKind::PlanAndExecute => plan_execute_rules(task, &sol, config, &mut rules),
        MethodKind::ReAct => react_rules(task, &sol, &mut rules),
        MethodKind::CodeAct => codeact_rules(task, &sol, &mut rules),
    }
    search_rules(task, &sol, &mut rules);
    summary_rules(task, &sol, &mut rules);
    rules
}

/// Oracle for one task.
pub fn task_backend(method: MethodKind, config: &RunConfig, task: &Task) -> ScriptedBackend {
    ScriptedBackend::new(ORACLE_IDENTITY, task_rules(method, config, task))
}

/// Oracle for a task set, routing each request by its question.
#[derive(Debug)]
pub struct OracleBackend {
    routes: BTreeMap<String, ScriptedBackend>,
}

impl OracleBackend {
    pub fn new<'t>(method: MethodKind, config: &RunConfig, tasks: impl IntoIterator<Item = &'t Task>) -> Self {
        let routes = tasks
            .into_iter()
            .map(|t| (t.query.clone(), task_backend(method, config, t)))
            .collect();
        Self { routes }
    }
}

impl Backend for OracleBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let text = request.prompt_text();
        let route = text
            .lines()
            .rev()
            .filter_map(|l| l.strip_prefix("Question: "))
            .find_map(|q| self.routes.get(q));
        match route {
            Some(b) => b.complete(request),
            None => Err(BackendError::RuleMiss {
                closest: Some("no task with this question".into()),
            }),
        }
    }

    fn identity(&self) -> String {
        ORACLE_IDENTITY.to_string()
    }
}

/// A model that keeps searching forever: every plan has one more search,
/// and every search names a tool that does not exist.
#[derive(Debug, Default)]
pub struct NeverFinishing {
    rounds: AtomicU64,
}

impl Backend for NeverFinishing {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let text = request.prompt_text();
        let n = self.rounds.fetch_add(1, Ordering::SeqCst) + 1;
        let body = if text.starts_with(marker(&PLANNER)) || text.starts_with(marker(&PLANNER_STEP)) {
            plan_json(
                "Action",
                &[
                    (
                        "More records may help.".into(),
                        format!("Searching[Look for more records, round {n}]"),
                    ),
                    finish_pair(),
                ],
            )
        } else if text.starts_with(marker(&PLAN_SOLVE)) || text.starts_with(marker(&PLAN_EXECUTE)) {
            plan_json(
                "Step",
                &(0..20)
                    .map(|i| ("More records may help.".to_string(), format!("Look for more records, round {n}.{i}")))
                    .collect::<Vec<_>>(),
            )
        } else if text.starts_with(marker(&REACT)) {
            format!("Thought: More records may help.\nAction: lookup_everything[field=round, value={n}]")
        } else if text.starts_with(marker(&CODEACT)) {
            format!("Thought: More records may help.\n{}", fenced(&format!("return {n}")))
        } else if text.starts_with(marker(&CODING)) {
            fenced("return 0")
        } else if text.starts_with(marker(&SUMMARIZE)) {
            "No answer was found.".to_string()
        } else {
            json!({"tool": "lookup_everything", "args": {"field": "round", "value": n.to_string()}}).to_string()
        };
        Ok(Completion { text: body, attempts: 1 })
    }

    fn identity(&self) -> String {
        "scripted:never-finishing".to_string()
    }
}
