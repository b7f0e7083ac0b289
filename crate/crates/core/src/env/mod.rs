//! Synthetic ground-truth world: tables of records, the retrieval tools
//! exposed over them, and generators for benchmark tasks.

pub mod fixtures;
pub mod generator;
mod record;
mod table;
mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{render_decimal, render_record, Record, Scalar};
pub use table::{snake_case, Table, TableError, ToolSemantics};
pub use task::{AggregateOp, Category, GeneratedTask, GoldHop, Task, TaskShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKind {
    Text,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    pub kind: ScalarKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ToolParam>,
    pub table: String,
    pub semantics: ToolSemantics,
}

impl ToolSpec {
    fn for_table(table: &Table, semantics: ToolSemantics) -> Self {
        let fields = table
            .fields
            .iter()
            .map(|f| if *f == table.key_field { format!("{f} (key)") } else { f.clone() })
            .collect::<Vec<_>>()
            .join(", ");
        let what = match semantics {
            ToolSemantics::GetRecord => format!(
                "Retrieve the single {} record whose <field> equals <value>.",
                table.name
            ),
            ToolSemantics::FilterRecords => format!(
                "List every {} record whose <field> equals <value>, in table order.",
                table.name
            ),
        };
        Self {
            name: format!("{}_{}", semantics.verb(), snake_case(&table.name)),
            description: format!("{what} Fields: {fields}."),
            parameters: vec![
                ToolParam {
                    name: "field".into(),
                    kind: ScalarKind::Text,
                },
                ToolParam {
                    name: "value".into(),
                    kind: ScalarKind::Any,
                },
            ],
            table: table.name.clone(),
            semantics,
        }
    }

    pub fn signature(&self) -> String {
        let params: Vec<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
        format!("{}({})", self.name, params.join(", "))
    }
}

/// A single tool invocation: canonical wire shape `{"tool": .., "args": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(rename = "tool")]
    pub tool_name: String,
    #[serde(rename = "args", default)]
    pub arguments: BTreeMap<String, Scalar>,
}

impl ToolCall {
    pub fn new(tool: &str, field: &str, value: impl Into<Scalar>) -> Self {
        let mut arguments = BTreeMap::new();
        arguments.insert("field".to_string(), Scalar::text(field));
        arguments.insert("value".to_string(), value.into());
        Self {
            tool_name: tool.to_string(),
            arguments,
        }
    }

    /// ReAct-style text form: `get_company[field=name, value=AlphaCorp]`.
    pub fn react_form(&self) -> String {
        let args: Vec<String> = self
            .arguments
            .iter()
            .map(|(k, v)| format!("{k}={}", v.render()))
            .collect();
        format!("{}[{}]", self.tool_name, args.join(", "))
    }

    /// Parses the ReAct text form. Values are kept as text.
    pub fn parse_react(text: &str) -> Option<ToolCall> {
        let text = text.trim();
        let open = text.find('[')?;
        let close = text.rfind(']')?;
        if close < open {
            return None;
        }
        let name = text[..open].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return None;
        }
        let inner = &text[open + 1..close];
        let mut pieces: Vec<String> = Vec::new();
        for segment in inner.split(',') {
            let starts_pair = segment
                .split_once('=')
                .is_some_and(|(k, _)| is_ident(k.trim()));
            match pieces.last_mut() {
                Some(last) if !starts_pair => {
                    last.push(',');
                    last.push_str(segment);
                }
                _ => pieces.push(segment.to_string()),
            }
        }
        let mut arguments = BTreeMap::new();
        for piece in pieces.iter().filter(|p| !p.trim().is_empty()) {
            let (k, v) = piece.split_once('=')?;
            let v = v.trim().trim_matches('"').trim_matches('\'');
            arguments.insert(k.trim().to_string(), Scalar::text(v));
        }
        Some(ToolCall {
            tool_name: name.to_string(),
            arguments,
        })
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.chars().next().is_some_and(|c| !c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolError {
    #[error("unknown tool {name}")]
    UnknownTool { name: String },
    #[error("table {table} has no field {field}")]
    UnknownField { table: String, field: String },
    #[error("no {table} record has {field} = {value}")]
    NoMatch {
        table: String,
        field: String,
        value: String,
    },
    #[error("invalid arguments for {tool}: {reason}")]
    InvalidArguments { tool: String, reason: String },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("fixture io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture decode error at {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Read-only world the agent probes through tools.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Environment {
    tables: BTreeMap<String, Table>,
    tools: BTreeMap<String, ToolSpec>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tables(tables: impl IntoIterator<Item = Table>) -> Result<Self, EnvError> {
        let mut env = Self::new();
        for t in tables {
            env.add_table(t)?;
        }
        Ok(env)
    }

    /// Adds a table, merging rows into an existing table of the same name.
    pub fn add_table(&mut self, table: Table) -> Result<(), EnvError> {
        table.validate()?;
        match self.tables.get_mut(&table.name) {
            Some(existing) => existing.merge(table)?,
            None => {
                for &sem in &table.tools {
                    let spec = ToolSpec::for_table(&table, sem);
                    self.tools.insert(spec.name.clone(), spec);
                }
                self.tables.insert(table.name.clone(), table);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: Environment) -> Result<(), EnvError> {
        for (_, t) in other.tables {
            self.add_table(t)?;
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values()
    }

    pub fn tool_for(&self, table: &str, semantics: ToolSemantics) -> Option<&ToolSpec> {
        self.tools
            .values()
            .find(|t| t.table == table && t.semantics == semantics)
    }

    pub fn invoke_tool(&self, call: &ToolCall) -> Result<Vec<Record>, ToolError> {
        let spec = self.tool(&call.tool_name).ok_or_else(|| ToolError::UnknownTool {
            name: call.tool_name.clone(),
        })?;
        let invalid = |reason: &str| ToolError::InvalidArguments {
            tool: spec.name.clone(),
            reason: reason.to_string(),
        };
        let expected: Vec<&str> = spec.parameters.iter().map(|p| p.name.as_str()).collect();
        let given: Vec<&str> = call.arguments.keys().map(String::as_str).collect();
        let mut expected_sorted = expected.clone();
        expected_sorted.sort_unstable();
        if given != expected_sorted {
            return Err(invalid(&format!(
                "expected arguments {}, got {}",
                expected.join(", "),
                given.join(", ")
            )));
        }
        let field = call.arguments["field"]
            .as_text()
            .ok_or_else(|| invalid("field must be text"))?;
        let value = call.arguments["value"].render();
        self.lookup(&spec.table, spec.semantics, field, &value)
    }

    /// Direct table access used by tools and sandbox built-ins.
    pub fn lookup(
        &self,
        table: &str,
        semantics: ToolSemantics,
        field: &str,
        value: &str,
    ) -> Result<Vec<Record>, ToolError> {
        let t = self.tables.get(table).ok_or_else(|| ToolError::UnknownTool {
            name: format!("{}({table})", semantics.builtin_name()),
        })?;
        if !t.has_field(field) {
            return Err(ToolError::UnknownField {
                table: table.to_string(),
                field: field.to_string(),
            });
        }
        let matches = |r: &&Record| r.get(field).is_some_and(|v| v.render() == value);
        match semantics {
            ToolSemantics::GetRecord => t
                .rows
                .iter()
                .find(matches)
                .map(|r| vec![r.clone()])
                .ok_or_else(|| ToolError::NoMatch {
                    table: table.to_string(),
                    field: field.to_string(),
                    value: value.to_string(),
                }),
            ToolSemantics::FilterRecords => Ok(t.rows.iter().filter(matches).cloned().collect()),
        }
    }

    /// Tool descriptions for the given tables (all tables when `None`).
    pub fn tool_prompt(&self, tables: Option<&[String]>) -> String {
        let mut lines = Vec::new();
        for spec in self.tools.values() {
            if tables.is_some_and(|ts| !ts.contains(&spec.table)) {
                continue;
            }
            lines.push(format!("- {}: {}", spec.signature(), spec.description));
        }
        lines.join("\n")
    }

    pub fn table_prompt(&self, tables: &[String]) -> String {
        tables
            .iter()
            .filter_map(|name| self.tables.get(name))
            .map(|t| format!("- {}", t.schema_line()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Environment {
        let mut company = Table::new("Company", "name", &["name", "city"]);
        for (n, c) in [("AlphaCorp", "Lyon"), ("BetaCorp", "Oslo"), ("GammaCorp", "Lyon")] {
            company.rows.push(
                [("name", n), ("city", c)]
                    .iter()
                    .map(|(k, v)| (k.to_string(), Scalar::text(*v)))
                    .collect(),
            );
        }
        let mut case = Table::new("Case", "case_no", &["case_no", "company_id"]);
        case.rows.push(
            [("case_no", "K1"), ("company_id", "C1")]
                .iter()
                .map(|(k, v)| (k.to_string(), Scalar::text(*v)))
                .collect(),
        );
        Environment::from_tables([company, case]).unwrap()
    }

    #[test]
    fn get_record_returns_the_matching_row() {
        let env = fixture();
        let rows = env
            .invoke_tool(&ToolCall::new("get_company", "name", "AlphaCorp"))
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0]["city"], Scalar::text("Lyon"));
    }

    #[test]
    fn filter_with_no_match_is_empty() {
        let env = fixture();
        let rows = env
            .invoke_tool(&ToolCall::new("filter_case", "company_id", "C7"))
            .unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn unknown_field_and_tool_and_no_match() {
        let env = fixture();
        assert!(matches!(
            env.invoke_tool(&ToolCall::new("get_company", "nme", "x")),
            Err(ToolError::UnknownField { .. })
        ));
        assert!(matches!(
            env.invoke_tool(&ToolCall::new("get_planet", "name", "x")),
            Err(ToolError::UnknownTool { .. })
        ));
        assert!(matches!(
            env.invoke_tool(&ToolCall::new("get_company", "name", "Nobody")),
            Err(ToolError::NoMatch { .. })
        ));
    }

    #[test]
    fn filter_keeps_row_order() {
        let env = fixture();
        let rows = env
            .invoke_tool(&ToolCall::new("filter_company", "city", "Lyon"))
            .unwrap();
        let names: Vec<String> = rows.iter().map(|r| r["name"].render()).collect();
        assert_eq!(names, ["AlphaCorp", "GammaCorp"]);
    }

    #[test]
    fn missing_arguments_are_rejected() {
        let env = fixture();
        let mut call = ToolCall::new("get_company", "name", "AlphaCorp");
        call.arguments.remove("value");
        assert!(matches!(
            env.invoke_tool(&call),
            Err(ToolError::InvalidArguments { .. })
        ));
    }

    #[test]
    fn react_form_round_trips() {
        let call = ToolCall::new("get_company", "name", "Alpha, Inc");
        let text = call.react_form();
        assert_eq!(text, "get_company[field=name, value=Alpha, Inc]");
        assert_eq!(ToolCall::parse_react(&text).unwrap(), call);
    }
}
