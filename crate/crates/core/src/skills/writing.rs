use super::{SkillContext, SkillOutcome};
use crate::plan::History;
use crate::prompts::WRITING;
use crate::trajectory::Purpose;

/// Renders history within `budget` characters, keeping the newest entries;
/// the oldest entries are dropped or cut first.
pub fn budget_history(history: &History, budget: usize) -> String {
    if history.is_empty() {
        return "(none)".to_string();
    }
    let blocks: Vec<String> = history
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let n = i + 1;
            format!(
                "Thought {n}: {}\nAction {n}: {}\nObservation {n}: {}\n",
                e.thought, e.action, e.observation
            )
        })
        .collect();
    let mut kept: Vec<String> = Vec::new();
    let mut used = 0;
    let mut dropped = 0;
    for (i, b) in blocks.iter().enumerate().rev() {
        let len = b.chars().count();
        if used + len <= budget {
            kept.push(b.clone());
            used += len;
        } else {
            let room = budget.saturating_sub(used);
            const MARK: &str = "[earlier text truncated] ";
            if room > MARK.len() + 32 {
                let tail: String = b.chars().skip(len - (room - MARK.len())).collect();
                kept.push(format!("{MARK}{tail}"));
            } else {
                dropped += 1;
            }
            dropped += i;
            break;
        }
    }
    kept.reverse();
    let mut out = String::new();
    if dropped > 0 {
        out.push_str(&format!("({dropped} earlier step(s) omitted)\n"));
    }
    out.push_str(&kept.concat());
    out
}

pub fn exec_writing(objective: &str, ctx: &mut SkillContext<'_, '_>) -> SkillOutcome {
    let material = budget_history(ctx.history, ctx.config.writing_budget);
    let prompt = WRITING
        .render(&[
            ("question", ctx.question),
            ("material", &material),
            ("objective", objective),
        ])
        .expect("writing template slots are fixed");
    match ctx.session.prompt(Purpose::Writing, prompt) {
        Ok(text) => SkillOutcome {
            observation: text,
            tool_calls_made: 0,
            error: None,
            payload: None,
        },
        Err(e) => SkillOutcome::backend_failure("Writing", e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{HistoryEntry, SkillAction, SkillKind};

    fn history(n: usize, obs_len: usize) -> History {
        let mut h = History::default();
        for i in 0..n {
            h.push(HistoryEntry {
                thought: format!("t{i}"),
                action: SkillAction::new(SkillKind::Searching, format!("obj{i}")),
                observation: format!("{i}:{}", "x".repeat(obs_len)),
            });
        }
        h
    }

    #[test]
    fn keeps_newest_within_budget() {
        let h = history(10, 100);
        let out = budget_history(&h, 400);
        assert!(out.chars().count() <= 400 + 40);
        assert!(out.contains("Observation 10: 9:"));
        assert!(!out.contains("Observation 1: 0:"));
        assert!(out.starts_with('('));
    }

    #[test]
    fn everything_fits() {
        let h = history(3, 10);
        assert_eq!(budget_history(&h, 12_000), h.render());
        assert_eq!(budget_history(&History::default(), 10), "(none)");
    }
}
