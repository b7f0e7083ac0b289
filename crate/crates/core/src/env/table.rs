use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::Record;

/// Which retrieval tools a table exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolSemantics {
    GetRecord,
    FilterRecords,
}

impl ToolSemantics {
    pub fn verb(self) -> &'static str {
        match self {
            ToolSemantics::GetRecord => "get",
            ToolSemantics::FilterRecords => "filter",
        }
    }

    pub fn builtin_name(self) -> &'static str {
        match self {
            ToolSemantics::GetRecord => "get_record",
            ToolSemantics::FilterRecords => "filter_records",
        }
    }
}

fn default_tools() -> Vec<ToolSemantics> {
    vec![ToolSemantics::GetRecord, ToolSemantics::FilterRecords]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub key_field: String,
    pub fields: Vec<String>,
    #[serde(default = "default_tools")]
    pub tools: Vec<ToolSemantics>,
    pub rows: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table name must be a non-empty identifier, got {0:?}")]
    BadName(String),
    #[error("table {table}: key field {field} is not one of its fields")]
    KeyFieldMissing { table: String, field: String },
    #[error("table {table}: row {row} does not have exactly the declared fields")]
    FieldSetMismatch { table: String, row: usize },
    #[error("table {table}: duplicate key {key}")]
    DuplicateKey { table: String, key: String },
    #[error("table {table}: schema differs from an existing table of the same name")]
    SchemaConflict { table: String },
}

impl Table {
    pub fn new(name: &str, key_field: &str, fields: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            key_field: key_field.to_string(),
            fields: fields.iter().map(|f| f.to_string()).collect(),
            tools: default_tools(),
            rows: Vec::new(),
        }
    }

    pub fn with_tools(mut self, tools: &[ToolSemantics]) -> Self {
        self.tools = tools.to_vec();
        self
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.fields.iter().any(|f| f == field)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let ident_ok = !self.name.is_empty()
            && self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && self.name.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
        if !ident_ok {
            return Err(TableError::BadName(self.name.clone()));
        }
        if !self.has_field(&self.key_field) {
            return Err(TableError::KeyFieldMissing {
                table: self.name.clone(),
                field: self.key_field.clone(),
            });
        }
        let mut keys = HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.fields.len() || !self.fields.iter().all(|f| row.contains_key(f)) {
                return Err(TableError::FieldSetMismatch {
                    table: self.name.clone(),
                    row: i,
                });
            }
            let key = row[&self.key_field].render();
            if !keys.insert(key.clone()) {
                return Err(TableError::DuplicateKey {
                    table: self.name.clone(),
                    key,
                });
            }
        }
        Ok(())
    }

    /// Appends the rows of `other`, which must share this table's schema.
    pub fn merge(&mut self, other: Table) -> Result<(), TableError> {
        if self.key_field != other.key_field || self.fields != other.fields || self.tools != other.tools {
            return Err(TableError::SchemaConflict {
                table: self.name.clone(),
            });
        }
        self.rows.extend(other.rows);
        self.validate()
    }

    /// One-line schema summary for prompts, e.g. `Company(name*, industry)`.
    pub fn schema_line(&self) -> String {
        let fields: Vec<String> = self
            .fields
            .iter()
            .map(|f| {
                if *f == self.key_field {
                    format!("{f}*")
                } else {
                    f.clone()
                }
            })
            .collect();
        format!("{}({})", self.name, fields.join(", "))
    }
}

/// `LawFirm` -> `law_firm`.
pub fn snake_case(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::record::Scalar;

    fn row(pairs: &[(&str, &str)]) -> Record {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Scalar::text(*v)))
            .collect()
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let mut t = Table::new("Company", "name", &["name", "city"]);
        t.rows.push(row(&[("name", "A"), ("city", "x")]));
        t.rows.push(row(&[("name", "A"), ("city", "y")]));
        assert!(matches!(t.validate(), Err(TableError::DuplicateKey { .. })));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut t = Table::new("Company", "name", &["name", "city"]);
        t.rows.push(row(&[("name", "A")]));
        assert!(matches!(t.validate(), Err(TableError::FieldSetMismatch { row: 0, .. })));
    }

    #[test]
    fn snake_case_splits_words() {
        assert_eq!(snake_case("LawFirm"), "law_firm");
        assert_eq!(snake_case("Company"), "company");
    }
}
