use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest};

/// How a rule recognizes a request. Precedence across kinds:
/// ordinal, then prompt hash, then substring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// The n-th call (1-based) made to this backend.
    Ordinal(u64),
    /// [`CompletionRequest::prompt_hash`] of the request.
    PromptHash(String),
    /// Every listed substring occurs in the prompt text.
    Contains(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub label: String,
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub response: String,
}

impl Rule {
    pub fn contains(label: impl Into<String>, needles: Vec<String>, response: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            matcher: Matcher::Contains(needles),
            response: response.into(),
        }
    }

    pub fn ordinal(n: u64, response: impl Into<String>) -> Self {
        Self {
            label: format!("call-{n}"),
            matcher: Matcher::Ordinal(n),
            response: response.into(),
        }
    }
}

/// Deterministic rule-driven stand-in for a language model. An unmatched
/// prompt is always an error.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    rules: Vec<Rule>,
    calls: AtomicU64,
}

impl Clone for ScriptedBackend {
    fn clone(&self) -> Self {
        Self::new(self.name.clone(), self.rules.clone())
    }
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, rules: Vec<Rule>) -> Self {
        Self {
            name: name.into(),
            rules,
            calls: AtomicU64::new(0),
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Loads one rule document per line.
    pub fn from_jsonl(path: &Path) -> std::io::Result<Self> {
        let file = fs::File::open(path)?;
        let mut rules = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rule: Rule = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            rules.push(rule);
        }
        Ok(Self::new(format!("scripted:{}", path.display()), rules))
    }

    pub fn to_jsonl(&self) -> String {
        self.rules
            .iter()
            .map(|r| serde_json::to_string(r).expect("rules serialize") + "\n")
            .collect()
    }

    fn find(&self, ordinal: u64, request: &CompletionRequest) -> Option<&Rule> {
        let by_ordinal = self
            .rules
            .iter()
            .find(|r| matches!(r.matcher, Matcher::Ordinal(n) if n == ordinal));
        if by_ordinal.is_some() {
            return by_ordinal;
        }
        if self
            .rules
            .iter()
            .any(|r| matches!(r.matcher, Matcher::PromptHash(_)))
        {
            let hash = request.prompt_hash();
            let by_hash = self
                .rules
                .iter()
                .find(|r| matches!(&r.matcher, Matcher::PromptHash(h) if *h == hash));
            if by_hash.is_some() {
                return by_hash;
            }
        }
        let text = request.prompt_text();
        self.rules.iter().find(|r| match &r.matcher {
            Matcher::Contains(needles) => needles.iter().all(|n| text.contains(n.as_str())),
            _ => false,
        })
    }

    /// Substring rule with the largest share of its needles present.
    fn closest(&self, request: &CompletionRequest) -> Option<String> {
        let text = request.prompt_text();
        let mut best: Option<(f64, &Rule, Vec<&str>)> = None;
        for r in &self.rules {
            if let Matcher::Contains(needles) = &r.matcher {
                if needles.is_empty() {
                    continue;
                }
                let missing: Vec<&str> = needles
                    .iter()
                    .filter(|n| !text.contains(n.as_str()))
                    .map(String::as_str)
                    .collect();
                let score = 1.0 - missing.len() as f64 / needles.len() as f64;
                if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                    best = Some((score, r, missing));
                }
            }
        }
        best.map(|(_, r, missing)| {
            let shown: Vec<String> = missing
                .iter()
                .map(|m| {
                    let m: String = m.chars().take(60).collect();
                    format!("{m:?}")
                })
                .collect();
            format!("{} missing {}", r.label, shown.join(", "))
        })
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let ordinal = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        match self.find(ordinal, request) {
            Some(rule) => Ok(Completion {
                text: rule.response.clone(),
                attempts: 1,
            }),
            None => Err(BackendError::RuleMiss {
                closest: self.closest(request),
            }),
        }
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}
