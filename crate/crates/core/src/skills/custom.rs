use super::{SkillContext, SkillOutcome};
use crate::prompts::CUSTOM_SKILL;
use crate::skills::budget_history;
use crate::trajectory::Purpose;

pub fn exec_custom(
    name: &str,
    description: &str,
    objective: &str,
    ctx: &mut SkillContext<'_, '_>,
) -> SkillOutcome {
    let history = budget_history(ctx.history, ctx.config.writing_budget);
    let prompt = CUSTOM_SKILL
        .render(&[
            ("skill", name),
            ("description", description),
            ("question", ctx.question),
            ("history", &history),
            ("objective", objective),
        ])
        .expect("custom skill template slots are fixed");
    match ctx.session.prompt(Purpose::Skill(name.to_string()), prompt) {
        Ok(text) => SkillOutcome {
            observation: text,
            tool_calls_made: 0,
            error: None,
            payload: None,
        },
        Err(e) => SkillOutcome::backend_failure(name, e),
    }
}
