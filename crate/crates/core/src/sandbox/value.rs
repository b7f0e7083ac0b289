use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{render_decimal, Record, Scalar};

/// Runtime value of the sandbox language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Dec(f64),
    Str(String),
    List(Vec<Value>),
    Record(BTreeMap<String, Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Dec(_) => "dec",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Record(_) => "record",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Dec(d) => *d != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.is_empty(),
            Value::Record(r) => !r.is_empty(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Dec(d) => Some(*d),
            _ => None,
        }
    }

    /// Top-level rendering: strings appear bare, nested strings quoted.
    pub fn render(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.render_nested(),
        }
    }

    fn render_nested(&self) -> String {
        match self {
            Value::None => "none".into(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Dec(d) => render_decimal(*d),
            Value::Str(s) => serde_json::to_string(s).expect("strings serialize"),
            Value::List(items) => {
                let inner: Vec<String> = items.iter().map(Value::render_nested).collect();
                format!("[{}]", inner.join(", "))
            }
            Value::Record(fields) => {
                let inner: Vec<String> = fields
                    .iter()
                    .map(|(k, v)| {
                        format!(
                            "{}: {}",
                            serde_json::to_string(k).expect("strings serialize"),
                            v.render_nested()
                        )
                    })
                    .collect();
                format!("{{{}}}", inner.join(", "))
            }
        }
    }

    /// Scalar form used as a tool argument.
    pub fn to_scalar(&self) -> Option<Scalar> {
        match self {
            Value::Bool(b) => Some(Scalar::Bool(*b)),
            Value::Int(i) => Some(Scalar::Int(*i)),
            Value::Dec(d) => Some(Scalar::Decimal(*d)),
            Value::Str(s) => Some(Scalar::Text(s.clone())),
            _ => None,
        }
    }

    /// Structural equality with numeric comparison across int and dec.
    pub fn equals(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (a, b) if a.as_f64().is_some() && b.as_f64().is_some() => a.as_f64() == b.as_f64(),
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.equals(y))
            }
            (Value::Record(a), Value::Record(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|((ka, va), (kb, vb))| ka == kb && va.equals(vb))
            }
            (a, b) => a == b,
        }
    }

    /// Ordering for numbers and strings; `None` when incomparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }
}

impl From<&Scalar> for Value {
    fn from(s: &Scalar) -> Self {
        match s {
            Scalar::Bool(b) => Value::Bool(*b),
            Scalar::Int(i) => Value::Int(*i),
            Scalar::Decimal(d) => Value::Dec(*d),
            Scalar::Text(t) => Value::Str(t.clone()),
        }
    }
}

impl From<&Record> for Value {
    fn from(r: &Record) -> Self {
        Value::Record(r.iter().map(|(k, v)| (k.clone(), v.into())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering() {
        assert_eq!(Value::Str("a".into()).render(), "a");
        assert_eq!(
            Value::List(vec![Value::Int(1), Value::Str("b".into()), Value::Dec(0.5)]).render(),
            r#"[1, "b", 0.5]"#
        );
        let mut r = BTreeMap::new();
        r.insert("n".to_string(), Value::None);
        assert_eq!(Value::Record(r).render(), r#"{"n": none}"#);
    }

    #[test]
    fn numeric_equality_crosses_types() {
        assert!(Value::Int(2).equals(&Value::Dec(2.0)));
        assert!(!Value::Int(2).equals(&Value::Str("2".into())));
        assert_eq!(Value::Int(1).compare(&Value::Dec(1.5)), Some(Ordering::Less));
        assert_eq!(Value::Int(1).compare(&Value::Str("x".into())), None);
    }
}
