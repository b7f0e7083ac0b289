//! The plan update policy: prompt assembly, response parsing and splicing
//! onto the executed prefix.

use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::backend::{BackendError, Message};
use crate::plan::{
    history_of, GlobalPlan, History, PlanError, SkillAction, SkillKind, DEFAULT_MAX_PLAN_LEN,
};
use crate::prompts::{PromptError, Template, PLANNER, PLANNER_STEP};
use crate::skills::SkillRegistry;
use crate::text::{json_values, strip_fences};
use crate::trajectory::{Purpose, Session};

/// Static prompt inputs for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerInputs {
    pub question: String,
    pub tool_prompt: String,
    pub table_prompt: String,
    /// Rendered exemplar transcripts.
    pub memory: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerConfig {
    pub max_plan_len: usize,
    pub repair_retries: u32,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_plan_len: DEFAULT_MAX_PLAN_LEN,
            repair_retries: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("response is not a JSON array: {0}")]
    MalformedDocument(String),
    #[error("element {index} must have exactly the string keys {expected}: {detail}")]
    MissingKeys {
        index: usize,
        expected: String,
        detail: String,
    },
    #[error("unknown skill {name:?}")]
    UnknownSkill { name: String },
    #[error("the plan is empty")]
    EmptyPlan,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("planning failed after {attempts} attempt(s): {last}")]
    PlanningFailed { attempts: u32, last: String },
}

pub fn render_memory(memory: &[String]) -> String {
    memory.join("\n\n")
}

pub fn build_planning_prompt(
    template: &Template,
    registry: &SkillRegistry,
    inputs: &PlannerInputs,
    history: &History,
) -> Result<String, PromptError> {
    let (types, count) = registry.action_types_prompt();
    let memory = render_memory(&inputs.memory);
    let scratchpad = history.render();
    template.render(&[
        ("action_count", &count),
        ("action_types", &types),
        ("question", &inputs.question),
        ("table_used_prompt", &inputs.table_prompt),
        ("tool_prompt", &inputs.tool_prompt),
        ("memory", &memory),
        ("scratchpad", &scratchpad),
    ])
}

/// Parses a JSON array of `{"Thinking": .., <action_key>: ..}` objects into
/// `(thought, action text)` pairs.
pub fn parse_step_list(raw: &str, action_key: &str) -> Result<Vec<(String, String)>, ParseError> {
    let body = strip_fences(raw);
    let doc = match serde_json::from_str::<Json>(body) {
        Ok(v) => v,
        Err(e) => json_values(body, '[')
            .into_iter()
            .next()
            .ok_or_else(|| ParseError::MalformedDocument(e.to_string()))?,
    };
    let Json::Array(items) = doc else {
        return Err(ParseError::MalformedDocument("top level is not an array".into()));
    };
    if items.is_empty() {
        return Err(ParseError::EmptyPlan);
    }
    let expected = format!("\"Thinking\" and \"{action_key}\"");
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            let bad = |detail: String| ParseError::MissingKeys {
                index,
                expected: expected.clone(),
                detail,
            };
            let obj: &Map<String, Json> = item.as_object().ok_or_else(|| bad("not an object".into()))?;
            let get = |k: &str| -> Result<String, ParseError> {
                match obj.get(k) {
                    Some(Json::String(s)) => Ok(s.trim().to_string()),
                    Some(_) => Err(bad(format!("{k} is not a string"))),
                    None => Err(bad(format!("{k} is missing"))),
                }
            };
            let thought = get("Thinking")?;
            let action = get(action_key)?;
            if obj.len() != 2 {
                let extra: Vec<&str> = obj
                    .keys()
                    .map(String::as_str)
                    .filter(|k| *k != "Thinking" && *k != action_key)
                    .collect();
                return Err(bad(format!("unexpected key(s) {}", extra.join(", "))));
            }
            Ok((thought, action))
        })
        .collect()
}

/// `Kind[objective]` with a case-insensitive kind keyword.
pub fn parse_action(text: &str, registry: &SkillRegistry) -> Result<SkillAction, ParseError> {
    let text = text.trim();
    let name_end = text
        .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
        .unwrap_or(text.len());
    let name = &text[..name_end];
    let kind = registry
        .resolve(name)
        .ok_or_else(|| ParseError::UnknownSkill { name: name.to_string() })?;
    let rest = text[name_end..].trim();
    let objective = match (rest.find('['), rest.rfind(']')) {
        (Some(open), Some(close)) if open < close => &rest[open + 1..close],
        _ => rest.trim_start_matches(':'),
    };
    Ok(SkillAction::new(kind, objective.trim()))
}

pub fn parse_plan_response(
    raw: &str,
    registry: &SkillRegistry,
) -> Result<Vec<(String, SkillAction)>, ParseError> {
    parse_step_list(raw, "Action")?
        .into_iter()
        .map(|(thought, action)| Ok((thought, parse_action(&action, registry)?)))
        .collect()
}

/// Canonical JSON rendering of parsed steps (inverse of [`parse_plan_response`]).
pub fn render_plan_response(steps: &[(String, SkillAction)]) -> String {
    let items: Vec<Json> = steps
        .iter()
        .map(|(t, a)| serde_json::json!({"Thinking": t, "Action": a.to_string()}))
        .collect();
    serde_json::to_string_pretty(&Json::Array(items)).expect("json renders")
}

fn corrective(error: &str) -> String {
    format!(
        "Your previous output could not be used: {error}. Output valid structured array only: a JSON array of objects with exactly the keys \"Thinking\" and \"Action\", whose last action is Finish, with no other text."
    )
}

/// Sends `prompt`, retrying with a corrective instruction while `accept`
/// rejects the response.
pub(crate) fn ask_with_repair<T>(
    session: &mut Session<'_>,
    purpose: Purpose,
    prompt: String,
    retries: u32,
    mut accept: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, PlannerError> {
    let mut messages = vec![Message::user(prompt)];
    let mut attempts = 0;
    loop {
        attempts += 1;
        let response = session.complete(purpose.clone(), messages.clone())?;
        match accept(&response) {
            Ok(v) => return Ok(v),
            Err(e) if attempts > retries => {
                return Err(PlannerError::PlanningFailed { attempts, last: e })
            }
            Err(e) => {
                messages.truncate(1);
                messages.push(Message {
                    role: crate::backend::Role::Assistant,
                    content: response,
                });
                messages.push(Message::user(corrective(&e)));
            }
        }
    }
}

/// Drops a leading echo of the already-executed actions.
fn drop_echo(prev: Option<&GlobalPlan>, mut steps: Vec<(String, SkillAction)>) -> Vec<(String, SkillAction)> {
    let Some(prev) = prev else { return steps };
    let executed: Vec<&SkillAction> = prev.steps.iter().take_while(|s| s.is_executed()).map(|s| &s.action).collect();
    if !executed.is_empty()
        && steps.len() > executed.len()
        && steps.iter().zip(&executed).all(|((_, a), b)| a.kind == b.kind && a.objective == b.objective)
    {
        steps.drain(..executed.len());
    }
    steps
}

/// One planning round: G_t from (Q, T, S_t).
pub fn update_global_plan(
    inputs: &PlannerInputs,
    registry: &SkillRegistry,
    prev: Option<&GlobalPlan>,
    session: &mut Session<'_>,
    config: &PlannerConfig,
) -> Result<GlobalPlan, PlannerError> {
    let history = prev.map(history_of).unwrap_or_default();
    let prompt = build_planning_prompt(&PLANNER, registry, inputs, &history)?;
    let revision = prev.map_or(1, |p| p.revision + 1);
    let base = prev.cloned().unwrap_or(GlobalPlan {
        revision: 0,
        steps: Vec::new(),
    });
    ask_with_repair(session, Purpose::Planning, prompt, config.repair_retries, |raw| {
        let steps = parse_plan_response(raw, registry).map_err(|e| e.to_string())?;
        let steps = drop_echo(prev, steps);
        let plan = base.splice(steps, revision);
        plan.check(config.max_plan_len).map_err(|e: PlanError| e.to_string())?;
        Ok(plan)
    })
}

/// Single next step without a global plan.
pub fn next_step(
    inputs: &PlannerInputs,
    registry: &SkillRegistry,
    history: &History,
    session: &mut Session<'_>,
    config: &PlannerConfig,
) -> Result<(String, SkillAction), PlannerError> {
    let prompt = build_planning_prompt(&PLANNER_STEP, registry, inputs, history)?;
    ask_with_repair(session, Purpose::NextStep, prompt, config.repair_retries, |raw| {
        let mut steps = parse_plan_response(raw, registry).map_err(|e| e.to_string())?;
        let (thought, action) = steps.remove(0);
        if !action.kind.is_finish() && action.objective.is_empty() {
            return Err(format!("a {} action needs an objective", action.kind));
        }
        Ok((thought, action))
    })
}

/// Baseline plans: free-text steps become Searching objectives; the list is
/// cut at the first Finish, which is appended when missing.
pub fn baseline_steps(pairs: Vec<(String, String)>, room: usize) -> Vec<(String, SkillAction)> {
    let mut out = Vec::new();
    for (thought, text) in pairs {
        if out.len() + 1 >= room.max(1) {
            break;
        }
        let lower = text.to_ascii_lowercase();
        let is_finish = lower == "finish"
            || lower.strip_prefix("finish").is_some_and(|r| r.starts_with(['[', ':', ' ', '.']));
        if is_finish {
            out.push((thought, SkillAction::finish()));
            return out;
        }
        if text.is_empty() {
            continue;
        }
        out.push((thought, SkillAction::new(SkillKind::Searching, text)));
    }
    out.push(("All steps are done.".to_string(), SkillAction::finish()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> SkillRegistry {
        SkillRegistry::default()
    }

    #[test]
    fn parses_table_example() {
        let raw = r#"[{"Thinking":"need company record","Action":"Searching[CompanyTable by name=X]"}]"#;
        let steps = parse_plan_response(raw, &reg()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].1.kind, SkillKind::Searching);
        assert_eq!(steps[0].1.objective, "CompanyTable by name=X");
        let fenced = format!("```json\n{raw}\n```");
        assert_eq!(parse_plan_response(&fenced, &reg()).unwrap(), steps);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_plan_response(r#"[{"Thinking":"done","Action":"Fly[away]"}]"#, &reg()),
            Err(ParseError::UnknownSkill { name: "Fly".into() })
        );
        assert_eq!(parse_plan_response("[]", &reg()), Err(ParseError::EmptyPlan));
        assert!(matches!(
            parse_plan_response("not json", &reg()),
            Err(ParseError::MalformedDocument(_))
        ));
        assert!(matches!(
            parse_plan_response(r#"[{"Thinking":"x"}]"#, &reg()),
            Err(ParseError::MissingKeys { index: 0, .. })
        ));
        assert!(matches!(
            parse_plan_response(r#"[{"Thinking":"x","Action":"Finish","Extra":1}]"#, &reg()),
            Err(ParseError::MissingKeys { .. })
        ));
    }

    #[test]
    fn action_forms() {
        let a = parse_action("searching[Case by case_no=C1]", &reg()).unwrap();
        assert_eq!(a, SkillAction::new(SkillKind::Searching, "Case by case_no=C1"));
        assert_eq!(parse_action("Finish", &reg()).unwrap(), SkillAction::finish());
        assert_eq!(
            parse_action("Finish[the answer]", &reg()).unwrap().objective,
            "the answer"
        );
        assert_eq!(
            parse_action("Coding[x = a[0]]", &reg()).unwrap().objective,
            "x = a[0]"
        );
    }

    #[test]
    fn render_round_trip() {
        let raw = r#"prose [{"Thinking":" a ","Action":"WRITING [ draft it ]"},{"Thinking":"b","Action":"finish"}] more"#;
        let once = parse_plan_response(raw, &reg()).unwrap();
        let twice = parse_plan_response(&render_plan_response(&once), &reg()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn baseline_normalization() {
        let pairs = vec![
            ("a".to_string(), "look up X".to_string()),
            ("b".to_string(), "Finish".to_string()),
            ("c".to_string(), "look up Y".to_string()),
        ];
        let steps = baseline_steps(pairs, 12);
        assert_eq!(steps.len(), 2);
        assert!(steps[1].1.kind.is_finish());
        let long: Vec<(String, String)> = (0..20).map(|i| (i.to_string(), format!("s{i}"))).collect();
        let steps = baseline_steps(long, 5);
        assert_eq!(steps.len(), 5);
        assert!(steps[4].1.kind.is_finish());
    }
}
