use serde_json::Value as Json;

use super::{SkillContext, SkillError, SkillOutcome};
use crate::env::{render_record, Environment, Record, ToolCall, ToolError};
use crate::prompts::SEARCHING;
use crate::skills::budget_history;
use crate::text::{json_values, strip_fences};
use crate::trajectory::{CallOrigin, Purpose, ToolCallRecord};

fn call_from_json(v: &Json) -> Option<ToolCall> {
    let obj = v.as_object()?;
    if !obj.contains_key("tool") {
        return None;
    }
    serde_json::from_value(v.clone()).ok()
}

/// Every tool call in a completion: the canonical JSON shape (single object,
/// array, or objects embedded in prose), else ReAct-style lines.
pub fn parse_tool_calls(text: &str) -> Vec<ToolCall> {
    let body = strip_fences(text);
    if let Ok(v) = serde_json::from_str::<Json>(body) {
        match &v {
            Json::Array(items) => return items.iter().filter_map(call_from_json).collect(),
            Json::Object(_) => return call_from_json(&v).into_iter().collect(),
            _ => {}
        }
    }
    let embedded: Vec<ToolCall> = json_values(text, '{').iter().filter_map(call_from_json).collect();
    if !embedded.is_empty() {
        return embedded;
    }
    text.lines()
        .map(|l| {
            let l = l.trim();
            l.strip_prefix("Action:").map(str::trim).unwrap_or(l)
        })
        .filter_map(ToolCall::parse_react)
        .collect()
}

pub fn render_tool_result(call: &ToolCall, result: &Result<Vec<Record>, ToolError>) -> String {
    match result {
        Ok(rows) if rows.is_empty() => format!("{} returned no records.", call.react_form()),
        Ok(rows) => {
            let mut out = format!("{} returned {} record(s):", call.react_form(), rows.len());
            for r in rows {
                out.push('\n');
                out.push_str(&render_record(r));
            }
            out
        }
        Err(e) => format!("{} failed: {e}", call.react_form()),
    }
}

/// Runs one already-parsed call, restricted to the task's tables, and logs it.
pub(crate) fn run_call(
    env: &Environment,
    tables: &[String],
    call: &ToolCall,
    ctx_step: u32,
    log: &mut Vec<ToolCallRecord>,
) -> Result<Vec<Record>, ToolError> {
    let visible = env.tool(&call.tool_name).is_some_and(|t| tables.contains(&t.table));
    let result = if visible {
        env.invoke_tool(call)
    } else {
        Err(ToolError::UnknownTool {
            name: call.tool_name.clone(),
        })
    };
    log.push(ToolCallRecord {
        step: ctx_step,
        origin: CallOrigin::Searching,
        call: call.clone(),
        records: result.clone().unwrap_or_default(),
        error: result.clone().err(),
    });
    result
}

pub fn exec_searching(objective: &str, ctx: &mut SkillContext<'_, '_>) -> SkillOutcome {
    let tool_prompt = ctx.env.tool_prompt(Some(ctx.tables));
    let history = budget_history(ctx.history, ctx.config.writing_budget);
    let prompt = SEARCHING
        .render(&[
            ("question", ctx.question),
            ("tool_prompt", &tool_prompt),
            ("history", &history),
            ("objective", objective),
        ])
        .expect("searching template slots are fixed");
    let response = match ctx.session.prompt(Purpose::Searching, prompt) {
        Ok(r) => r,
        Err(e) => return SkillOutcome::backend_failure("Searching", e),
    };
    let calls = parse_tool_calls(&response);
    let Some(call) = calls.first() else {
        let shown: String = response.chars().take(200).collect();
        return SkillOutcome {
            observation: format!(
                "No tool call could be read from the response {shown:?}. Expected {{\"tool\": <name>, \"args\": {{\"field\": .., \"value\": ..}}}}."
            ),
            tool_calls_made: 0,
            error: Some(SkillError::MalformedCall {
                reason: "no tool call found".into(),
            }),
            payload: None,
        };
    };
    let step = ctx.session.step;
    let result = run_call(ctx.env, ctx.tables, call, step, &mut ctx.session.tool_calls);
    let mut observation = render_tool_result(call, &result);
    if calls.len() > 1 {
        observation.push_str(&format!(
            "\nNote: {} additional tool call(s) were discarded; a Searching step runs exactly one call.",
            calls.len() - 1
        ));
    }
    SkillOutcome {
        observation,
        tool_calls_made: 1,
        error: result.err().map(|error| SkillError::Tool { error }),
        payload: None,
    }
}
