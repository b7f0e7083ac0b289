//! Prompt templates with named `{slot}` markers.
//!
//! Literal braces are written `{{` and `}}`. Templates are versioned text
//! assets compiled into the binary.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template {template} needs slot {{{slot}}} but no value was supplied")]
    TemplateSlotMissing { template: String, slot: String },
    #[error("template {template} has an unterminated slot at byte {offset}")]
    Unterminated { template: String, offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! template {
    ($ident:ident, $file:literal) => {
        pub const $ident: Template = Template {
            name: $file,
            text: include_str!(concat!("../assets/prompts/", $file)),
        };
    };
}

template!(PLANNER, "planner.v1.txt");
template!(PLANNER_STEP, "planner_step.v1.txt");
template!(SEARCHING, "searching.v1.txt");
template!(CODING, "coding.v1.txt");
template!(WRITING, "writing.v1.txt");
template!(CUSTOM_SKILL, "custom_skill.v1.txt");
template!(SUMMARIZE, "summarize.v1.txt");
template!(REACT, "react.v1.txt");
template!(CODEACT, "codeact.v1.txt");
template!(PLAN_SOLVE, "plan_solve.v1.txt");
template!(PLAN_EXECUTE, "plan_execute.v1.txt");

/// Opening line of each template; scripted fixtures key on these.
pub fn marker(t: &Template) -> &'static str {
    t.text.lines().next().unwrap_or_default()
}

impl Template {
    /// Names of the slots used by this template, in first-use order.
    pub fn slots(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let text = self.text;
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => i += 2,
                b'}' if bytes.get(i + 1) == Some(&b'}') => i += 2,
                b'{' => {
                    if let Some(end) = text[i + 1..].find('}') {
                        let name = &text[i + 1..i + 1 + end];
                        if !out.contains(&name) {
                            out.push(name);
                        }
                        i += end + 2;
                    } else {
                        i += 1;
                    }
                }
                _ => i += 1,
            }
        }
        out
    }

    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String, PromptError> {
        render(self.name, self.text, slots)
    }
}

pub fn render(name: &str, text: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len() + 256);
    let mut rest = text;
    let mut offset = 0;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
            offset += pos + 2;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
            offset += pos + 2;
        } else if let Some(after) = tail.strip_prefix('}') {
            out.push('}');
            rest = after;
            offset += pos + 1;
        } else {
            let end = tail[1..].find('}').ok_or(PromptError::Unterminated {
                template: name.to_string(),
                offset: offset + pos,
            })?;
            let slot = &tail[1..1 + end];
            let value = slots
                .iter()
                .find(|(k, _)| *k == slot)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::TemplateSlotMissing {
                    template: name.to_string(),
                    slot: slot.to_string(),
                })?;
            out.push_str(value);
            rest = &tail[end + 2..];
            offset += pos + end + 2;
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Spelled-out small counts, as in "one of the following four types".
pub fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_and_unescapes() {
        let s = render("t", "a {x} {{y}} {x}", &[("x", "1")]).unwrap();
        assert_eq!(s, "a 1 {y} 1");
    }

    #[test]
    fn missing_slot_is_reported() {
        let e = render("t", "{x} {z}", &[("x", "1")]).unwrap_err();
        assert_eq!(
            e,
            PromptError::TemplateSlotMissing {
                template: "t".into(),
                slot: "z".into()
            }
        );
    }

    #[test]
    fn values_are_not_reinterpreted() {
        assert_eq!(render("t", "{x}", &[("x", "{y}")]).unwrap(), "{y}");
    }

    #[test]
    fn planner_slots() {
        assert_eq!(
            PLANNER.slots(),
            vec![
                "action_count",
                "action_types",
                "question",
                "table_used_prompt",
                "tool_prompt",
                "memory",
                "scratchpad"
            ]
        );
        for t in [
            PLANNER, PLANNER_STEP, SEARCHING, CODING, WRITING, CUSTOM_SKILL, SUMMARIZE, REACT,
            CODEACT, PLAN_SOLVE, PLAN_EXECUTE,
        ] {
            let values: Vec<(&str, &str)> = t.slots().into_iter().map(|s| (s, "v")).collect();
            t.render(&values).unwrap();
        }
    }

    #[test]
    fn markers_are_distinct() {
        let all = [
            PLANNER, PLANNER_STEP, SEARCHING, CODING, WRITING, CUSTOM_SKILL, SUMMARIZE, REACT,
            CODEACT, PLAN_SOLVE, PLAN_EXECUTE,
        ];
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(!b.text.contains(marker(a)), "{} inside {}", a.name, b.name);
            }
        }
    }
}
