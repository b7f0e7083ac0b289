//! A small deterministic scripting language for the Coding skill.
//!
//! Scripts see every registered tool as a built-in function plus the generic
//! `get_record(table, field, value)` / `filter_records(table, field, value)`.
//! Evaluation is bounded by [`SandboxLimits`]; every failure is reported in
//! [`SandboxResult::fault`] rather than returned as an error.

mod interp;
mod syntax;
mod value;

use serde::{Deserialize, Serialize};

use crate::env::{render_record, Environment, Record, ToolCall, ToolError};

pub use syntax::{parse, BinOp, Expr, Program, Stmt, StmtKind};
pub use value::Value;

/// Grammar reference shown to the model when it writes scripts.
pub const GRAMMAR: &str = include_str!("../../assets/prompts/sandbox_grammar.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    pub max_eval_steps: u64,
    pub max_tool_calls: u32,
    pub max_output_bytes: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            max_eval_steps: 10_000,
            max_tool_calls: 50,
            max_output_bytes: 4096,
        }
    }
}

impl SandboxLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_eval_steps == 0 || self.max_tool_calls == 0 || self.max_output_bytes == 0 {
            return Err("sandbox limits must all be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    ParseError,
    RuntimeError,
    LimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub kind: FaultKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            FaultKind::ParseError => "ParseError",
            FaultKind::RuntimeError => "RuntimeError",
            FaultKind::LimitExceeded => "LimitExceeded",
        };
        match self.line {
            Some(l) => write!(f, "{kind} (line {l}): {}", self.message),
            None => write!(f, "{kind}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub call: ToolCall,
    #[serde(default)]
    pub records: Vec<Record>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolError>,
}

impl TraceEntry {
    pub fn summary(&self) -> String {
        match &self.error {
            Some(e) => format!("{} -> error: {e}", self.call.react_form()),
            None => format!("{} -> {} record(s)", self.call.react_form(), self.records.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxResult {
    pub value: Value,
    pub rendered: String,
    #[serde(default)]
    pub output: String,
    pub trace: Vec<TraceEntry>,
    pub steps_used: u64,
    pub tool_calls_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl SandboxResult {
    pub fn is_ok(&self) -> bool {
        self.fault.is_none()
    }

    /// Text handed back to the planner as the step's observation.
    pub fn observation(&self) -> String {
        let mut out = String::new();
        match &self.fault {
            None => {
                if !self.output.is_empty() {
                    out.push_str(self.output.trim_end());
                    out.push('\n');
                }
                out.push_str("Result: ");
                out.push_str(&self.rendered);
            }
            Some(f) => {
                out.push_str(&f.to_string());
            }
        }
        if !self.trace.is_empty() {
            out.push_str(&format!("\nTool calls ({}):", self.trace.len()));
            for t in self.trace.iter().take(8) {
                out.push_str("\n  ");
                out.push_str(&t.summary());
            }
            if self.trace.len() > 8 {
                out.push_str(&format!("\n  ... {} more", self.trace.len() - 8));
            }
        }
        out
    }
}

/// Runs `source` against the tools of `env`, restricted to `scope` tables
/// when given.
pub fn eval_script(
    source: &str,
    env: &Environment,
    scope: Option<&[String]>,
    limits: &SandboxLimits,
) -> SandboxResult {
    let mut result = SandboxResult {
        value: Value::None,
        rendered: String::new(),
        output: String::new(),
        trace: Vec::new(),
        steps_used: 0,
        tool_calls_used: 0,
        fault: None,
    };
    if let Err(msg) = limits.validate() {
        result.fault = Some(Fault {
            kind: FaultKind::RuntimeError,
            message: msg,
            line: None,
        });
        return result;
    }
    let program = match parse(source) {
        Ok(p) => p,
        Err(f) => {
            result.fault = Some(f);
            return result;
        }
    };
    let mut interp = interp::Interp::new(env, scope, limits);
    let outcome = interp.run(&program);
    result.steps_used = interp.steps;
    result.tool_calls_used = interp.tool_calls;
    result.trace = interp.trace;
    result.output = interp.output;
    match outcome {
        Ok(v) => {
            let rendered = v.render();
            if rendered.len() + result.output.len() > limits.max_output_bytes {
                result.fault = Some(Fault {
                    kind: FaultKind::LimitExceeded,
                    message: format!("output exceeds {} bytes", limits.max_output_bytes),
                    line: None,
                });
            } else {
                result.rendered = rendered;
                result.value = v;
            }
        }
        Err(f) => result.fault = Some(f),
    }
    result
}

/// Renders a trace for logs, one call per line.
pub fn render_trace(trace: &[TraceEntry]) -> String {
    trace
        .iter()
        .map(|t| match &t.error {
            Some(e) => format!("{} !! {e}", t.call.react_form()),
            None => format!(
                "{} => [{}]",
                t.call.react_form(),
                t.records.iter().map(render_record).collect::<Vec<_>>().join(", ")
            ),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Scalar, Table};

    fn env() -> Environment {
        let mut t = Table::new("Case", "case_no", &["case_no", "status", "amount"]);
        for (i, (status, amount)) in [("open", 10), ("closed", 20), ("open", 30), ("open", 5), ("open", 1)]
            .iter()
            .enumerate()
        {
            let mut r = Record::new();
            r.insert("case_no".into(), Scalar::text(format!("C{i}")));
            r.insert("status".into(), Scalar::text(*status));
            r.insert("amount".into(), Scalar::Int(*amount));
            t.rows.push(r);
        }
        Environment::from_tables([t]).unwrap()
    }

    fn run(src: &str) -> SandboxResult {
        eval_script(src, &env(), None, &SandboxLimits::default())
    }

    #[test]
    fn arithmetic() {
        assert_eq!(run("return 1+2").rendered, "3");
        assert_eq!(run("return 7/2").rendered, "3.5");
        assert_eq!(run("return 8/2").value, Value::Int(4));
        assert_eq!(run("return -7 % 3").value, Value::Int(-1));
        assert_eq!(run("return 9223372036854775807 + 1").value, Value::Dec(9223372036854775808.0));
        assert_eq!(run("return 1/0").fault.unwrap().kind, FaultKind::RuntimeError);
        assert_eq!(run("return \"n=\" + 3").rendered, "n=3");
    }

    #[test]
    fn filter_count_and_branch() {
        assert_eq!(run("xs = filter_records(Case,status,open); return len(xs)").rendered, "4");
        let r = run("if len(filter_records(Case,status,void)) > 0 { return first(filter_records(Case,status,void)).case_no } return \"none\"");
        assert_eq!(r.rendered, "none");
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn loops_and_tools() {
        let r = run("total = 0\nfor c in filter_records(\"Case\", \"status\", \"open\") {\n  row = get_case(\"case_no\", c.case_no)\n  total = total + row.amount\n}\nreturn total");
        assert_eq!(r.rendered, "46");
        assert_eq!(r.tool_calls_used, 5);
        assert_eq!(r.trace[1].call.react_form(), "get_case[field=case_no, value=C0]");
    }

    #[test]
    fn infinite_loop_hits_budget_exactly() {
        let limits = SandboxLimits {
            max_eval_steps: 500,
            ..SandboxLimits::default()
        };
        let r = eval_script("while true { x = 1 }", &env(), None, &limits);
        assert_eq!(r.fault.unwrap().kind, FaultKind::LimitExceeded);
        assert_eq!(r.steps_used, 500);
    }

    #[test]
    fn tool_budget() {
        let limits = SandboxLimits {
            max_tool_calls: 3,
            ..SandboxLimits::default()
        };
        let r = eval_script("for i in range(10) { filter_case(status, open) }", &env(), None, &limits);
        assert_eq!(r.fault.unwrap().kind, FaultKind::LimitExceeded);
        assert_eq!(r.tool_calls_used, 3);
    }

    #[test]
    fn unknown_tool_named() {
        let f = run("return fetch_everything(\"x\")").fault.unwrap();
        assert_eq!(f.kind, FaultKind::RuntimeError);
        assert!(f.message.contains("fetch_everything"));
    }

    #[test]
    fn scope_hides_tables() {
        let scope = vec!["Other".to_string()];
        let r = eval_script("return filter_case(status, open)", &env(), Some(&scope), &SandboxLimits::default());
        assert!(r.fault.unwrap().message.contains("filter_case"));
    }

    #[test]
    fn output_limit() {
        let limits = SandboxLimits {
            max_output_bytes: 16,
            ..SandboxLimits::default()
        };
        let r = eval_script("for i in range(100) { print(i) }", &env(), None, &limits);
        assert_eq!(r.fault.unwrap().kind, FaultKind::LimitExceeded);
    }

    #[test]
    fn builtins() {
        assert_eq!(run("return sort([3, 1, 2])").rendered, "[1, 2, 3]");
        assert_eq!(run("return avg([1, 2])").rendered, "1.5");
        assert_eq!(run("return max([1, 5.5, 2])").rendered, "5.5");
        assert_eq!(run("return sort(filter_case(status, open), \"amount\")[0].amount").rendered, "1");
        assert_eq!(run("return get(record(\"a\", 1), \"b\", 0)").rendered, "0");
        assert_eq!(run("return get_case(case_no, \"missing\")").rendered, "none");
    }
}
