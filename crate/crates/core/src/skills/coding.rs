use super::{SkillContext, SkillError, SkillOutcome};
use crate::prompts::CODING;
use crate::sandbox::{eval_script, GRAMMAR};
use crate::skills::budget_history;
use crate::text::{first_fenced_block, strip_fences};
use crate::trajectory::{CallOrigin, Purpose, SandboxRun, ToolCallRecord};

/// The script in a completion: the first fenced block, else the whole text.
pub fn extract_script(text: &str) -> String {
    first_fenced_block(text)
        .unwrap_or_else(|| strip_fences(text))
        .to_string()
}

pub fn exec_coding(objective: &str, ctx: &mut SkillContext<'_, '_>) -> SkillOutcome {
    let tool_prompt = ctx.env.tool_prompt(Some(ctx.tables));
    let history = budget_history(ctx.history, ctx.config.writing_budget);
    let prompt = CODING
        .render(&[
            ("grammar", GRAMMAR),
            ("tool_prompt", &tool_prompt),
            ("question", ctx.question),
            ("history", &history),
            ("objective", objective),
        ])
        .expect("coding template slots are fixed");
    let response = match ctx.session.prompt(Purpose::Coding, prompt) {
        Ok(r) => r,
        Err(e) => return SkillOutcome::backend_failure("Coding", e),
    };
    let script = extract_script(&response);
    run_script(script, ctx)
}

pub(crate) fn run_script(script: String, ctx: &mut SkillContext<'_, '_>) -> SkillOutcome {
    let result = eval_script(&script, ctx.env, Some(ctx.tables), &ctx.config.sandbox);
    let step = ctx.session.step;
    for t in &result.trace {
        ctx.session.tool_calls.push(ToolCallRecord {
            step,
            origin: CallOrigin::Sandbox,
            call: t.call.clone(),
            records: t.records.clone(),
            error: t.error.clone(),
        });
    }
    let outcome = SkillOutcome {
        observation: result.observation(),
        tool_calls_made: result.tool_calls_used,
        error: result.fault.clone().map(|fault| SkillError::Sandbox { fault }),
        payload: None,
    };
    ctx.session.sandbox_runs.push(SandboxRun {
        step,
        script,
        result,
    });
    outcome
}
