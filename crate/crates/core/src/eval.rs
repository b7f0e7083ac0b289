//! Success-rate scoring and report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::env::{Category, Task};
use crate::trajectory::Trajectory;

pub const ALL_COLUMN: &str = "ALL";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("key answer set is empty")]
    EmptyKeywordSet,
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("task {0} has no category")]
    MissingCategory(String),
    #[error("reports cover different task sets: {left} vs {right}")]
    TaskSetMismatch { left: String, right: String },
    #[error("comparison needs at least two reports")]
    NotEnoughReports,
    #[error("reference method {0} is not among the reports")]
    UnknownReference(String),
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// Keyword match of one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub s: f64,
    pub matched: BTreeSet<String>,
    pub missing: BTreeSet<String>,
}

/// `s = |M| / |K|` where `M` holds the keywords occurring verbatim in the
/// output (both sides NFC-normalized, case-sensitive).
pub fn success_rate<S: AsRef<str>>(key_answers: &[S], output: &str) -> Result<Match, EvalError> {
    let keys: BTreeSet<String> = key_answers.iter().map(|k| k.as_ref().to_string()).collect();
    if keys.is_empty() {
        return Err(EvalError::EmptyKeywordSet);
    }
    let output = nfc(output);
    let (matched, missing): (BTreeSet<String>, BTreeSet<String>) =
        keys.into_iter().partition(|k| output.contains(nfc(k).as_str()));
    Ok(Match {
        s: matched.len() as f64 / (matched.len() + missing.len()) as f64,
        matched,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub s: f64,
    pub matched: BTreeSet<String>,
    pub missing: BTreeSet<String>,
    /// Share of key_middles seen in observations; absent when the task has none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub middle_coverage: Option<f64>,
    pub step_count: u32,
    pub degraded: bool,
}

/// Fraction of intermediate path values visible anywhere in the observations.
pub fn middle_coverage(task: &Task, trajectory: &Trajectory) -> Option<f64> {
    if task.key_middles.is_empty() {
        return None;
    }
    let seen = nfc(&trajectory
        .history
        .entries
        .iter()
        .map(|e| e.observation.as_str())
        .collect::<Vec<_>>()
        .join("\n"));
    let hit = task
        .key_middles
        .iter()
        .filter(|m| seen.contains(nfc(m).as_str()))
        .count();
    Some(hit as f64 / task.key_middles.len() as f64)
}

pub fn score_task(task: &Task, trajectory: &Trajectory) -> Result<TaskScore, EvalError> {
    let output = trajectory.final_answer.as_deref().unwrap_or_default();
    let m = success_rate(&task.key_answers, output)?;
    Ok(TaskScore {
        task_id: task.id.clone(),
        s: m.s,
        matched: m.matched,
        missing: m.missing,
        middle_coverage: middle_coverage(task, trajectory),
        step_count: trajectory.step_count,
        degraded: trajectory.degraded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub n: usize,
    pub mean: f64,
}

/// One method's row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub method: String,
    pub n: usize,
    pub categories: BTreeMap<Category, CategoryStat>,
    pub all: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub middle_coverage: Option<f64>,
    pub task_ids: Vec<String>,
}

impl SuiteReport {
    /// Value of a report column ("1-hop" .. "Aggregation", "ALL").
    pub fn column(&self, name: &str) -> Option<f64> {
        if name == ALL_COLUMN {
            return Some(self.all);
        }
        self.categories
            .iter()
            .find(|(c, _)| c.label() == name)
            .map(|(_, s)| s.mean)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Unweighted per-category and overall means.
pub fn aggregate(
    method: &str,
    scores: &[TaskScore],
    categories: &BTreeMap<String, Category>,
) -> Result<SuiteReport, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let mut by_cat: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for s in scores {
        let c = categories
            .get(&s.task_id)
            .ok_or_else(|| EvalError::MissingCategory(s.task_id.clone()))?;
        by_cat.entry(*c).or_default().push(s.s);
    }
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v
    };
    let categories = by_cat
        .into_iter()
        .map(|(c, v)| {
            let n = v.len();
            (
                c,
                CategoryStat {
                    n,
                    mean: mean(sorted(v).into_iter()).unwrap_or_default(),
                },
            )
        })
        .collect();
    let all = mean(sorted(scores.iter().map(|s| s.s).collect()).into_iter()).unwrap_or_default();
    let middle_coverage = mean(sorted(scores.iter().filter_map(|s| s.middle_coverage).collect()).into_iter());
    let mut task_ids: Vec<String> = scores.iter().map(|s| s.task_id.clone()).collect();
    task_ids.sort();
    Ok(SuiteReport {
        method: method.to_string(),
        n: scores.len(),
        categories,
        all,
        middle_coverage,
        task_ids,
    })
}

/// Column headings present in any report, in table order.
pub fn columns(reports: &[SuiteReport]) -> Vec<String> {
    let cats: BTreeSet<Category> = reports.iter().flat_map(|r| r.categories.keys().copied()).collect();
    let mut cols: Vec<String> = cats.into_iter().map(Category::label).collect();
    cols.push(ALL_COLUMN.to_string());
    cols
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".to_string())
}

fn table(rows: &[(String, Vec<String>)], header: &[String]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    let first = rows
        .iter()
        .map(|(m, _)| m.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or_default();
    for (_, cells) in rows {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<first$}", "Method");
    for (h, w) in header.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (m, cells) in rows {
        let _ = write!(out, "{m:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    out
}

/// Plain-text table: one row per method, four decimals.
pub fn render_text(reports: &[SuiteReport]) -> String {
    let cols = columns(reports);
    let rows: Vec<(String, Vec<String>)> = reports
        .iter()
        .map(|r| (r.method.clone(), cols.iter().map(|c| cell(r.column(c))).collect()))
        .collect();
    let mut out = table(&rows, &cols);
    let n = reports.first().map_or(0, |r| r.n);
    let _ = writeln!(out, "N = {n}");
    let cov: Vec<String> = reports
        .iter()
        .filter_map(|r| r.middle_coverage.map(|c| format!("{} {c:.4}", r.method)))
        .collect();
    if !cov.is_empty() {
        let _ = writeln!(out, "Path coverage (key middles, diagnostic): {}", cov.join(", "));
    }
    out
}

pub fn render_json(reports: &[SuiteReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub reference: String,
    /// Column order, as in the score table.
    pub columns: Vec<String>,
    /// Per column: the best method other than the reference, and its value.
    pub best_other: BTreeMap<String, (String, f64)>,
    /// Per method, per column: value minus the best non-reference value.
    pub deltas: Vec<(String, BTreeMap<String, f64>)>,
}

/// Deltas of every method against the best non-reference method, per column.
pub fn compare_methods(reports: &[SuiteReport], reference: &str) -> Result<DeltaTable, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::NotEnoughReports);
    }
    let first = &reports[0];
    for r in &reports[1..] {
        if r.task_ids != first.task_ids {
            return Err(EvalError::TaskSetMismatch {
                left: first.method.clone(),
                right: r.method.clone(),
            });
        }
    }
    if !reports.iter().any(|r| r.method == reference) {
        return Err(EvalError::UnknownReference(reference.to_string()));
    }
    let cols = columns(reports);
    let mut best_other = BTreeMap::new();
    for c in &cols {
        let best = reports
            .iter()
            .filter(|r| r.method != reference)
            .filter_map(|r| r.column(c).map(|v| (r.method.clone(), v)))
            .fold(None::<(String, f64)>, |acc, (m, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((m, v)),
            });
        if let Some(b) = best {
            best_other.insert(c.clone(), b);
        }
    }
    let deltas = reports
        .iter()
        .map(|r| {
            let row = cols
                .iter()
                .filter_map(|c| Some((c.clone(), r.column(c)? - best_other.get(c)?.1)))
                .collect();
            (r.method.clone(), row)
        })
        .collect();
    Ok(DeltaTable {
        reference: reference.to_string(),
        columns: cols.into_iter().filter(|c| best_other.contains_key(c)).collect(),
        best_other,
        deltas,
    })
}

pub fn render_deltas(table_: &DeltaTable) -> String {
    let cols = &table_.columns;
    let rows: Vec<(String, Vec<String>)> = table_
        .deltas
        .iter()
        .map(|(m, row)| {
            (
                m.clone(),
                cols.iter()
                    .map(|c| row.get(c).map(|d| format!("{d:+.4}")).unwrap_or_else(|| "-".into()))
                    .collect(),
            )
        })
        .collect();
    let mut out = format!("Delta vs best method other than {}\n", table_.reference);
    out.push_str(&table(&rows, cols));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(id: &str, s: f64) -> TaskScore {
        TaskScore {
            task_id: id.into(),
            s,
            matched: BTreeSet::new(),
            missing: BTreeSet::new(),
            middle_coverage: None,
            step_count: 1,
            degraded: false,
        }
    }

    #[test]
    fn success_rate_examples() {
        let k = ["AlphaCorp", "2019-04"];
        assert_eq!(success_rate(&k, "AlphaCorp filed in 2019-04.").unwrap().s, 1.0);
        let half = success_rate(&k, "AlphaCorp only").unwrap();
        assert_eq!(half.s, 0.5);
        assert!(half.missing.contains("2019-04"));
        assert_eq!(success_rate(&["x"], "").unwrap().s, 0.0);
        assert_eq!(success_rate::<&str>(&[], "x"), Err(EvalError::EmptyKeywordSet));
    }

    #[test]
    fn matching_is_nfc_and_case_sensitive() {
        let composed = "caf\u{e9}";
        let decomposed = "cafe\u{301}";
        assert_eq!(success_rate(&[composed], decomposed).unwrap().s, 1.0);
        assert_eq!(success_rate(&["Cafe"], "cafe").unwrap().s, 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let cats: BTreeMap<String, Category> = [
            ("a".to_string(), Category::Hop(1)),
            ("b".to_string(), Category::Hop(1)),
            ("c".to_string(), Category::Writing),
        ]
        .into();
        let r = aggregate("m", &[score("a", 1.0), score("b", 0.5)], &cats).unwrap();
        assert_eq!(r.column("1-hop"), Some(0.75));
        let r = aggregate("m", &[score("a", 1.0), score("c", 0.0)], &cats).unwrap();
        assert_eq!(r.all, 0.5);
        assert_eq!(aggregate("m", &[], &cats), Err(EvalError::EmptyScores));
        assert_eq!(
            aggregate("m", &[score("z", 1.0)], &cats),
            Err(EvalError::MissingCategory("z".into()))
        );
    }

    #[test]
    fn comparison() {
        let cats: BTreeMap<String, Category> =
            [("a".to_string(), Category::Hop(1)), ("b".to_string(), Category::Writing)].into();
        let mk = |m: &str, a: f64, b: f64| aggregate(m, &[score("a", a), score("b", b)], &cats).unwrap();
        let reports = vec![mk("goalact", 1.0, 0.5), mk("react", 0.5, 0.5), mk("codeact", 0.25, 1.0)];
        let d = compare_methods(&reports, "goalact").unwrap();
        assert_eq!(d.best_other["1-hop"], ("react".to_string(), 0.5));
        assert_eq!(d.best_other["Writing"], ("codeact".to_string(), 1.0));
        assert_eq!(d.deltas[0].1["1-hop"], 0.5);
        assert_eq!(d.deltas[0].1["Writing"], -0.5);
        assert_eq!(d.deltas[0].1["ALL"], 0.75 - 0.625);
        assert_eq!(compare_methods(&reports[..1], "goalact"), Err(EvalError::NotEnoughReports));
        let other = aggregate("x", &[score("a", 1.0)], &cats).unwrap();
        assert!(matches!(
            compare_methods(&[reports[0].clone(), other], "goalact"),
            Err(EvalError::TaskSetMismatch { .. })
        ));
        assert_eq!(
            compare_methods(&reports, "plan_and_solve"),
            Err(EvalError::UnknownReference("plan_and_solve".into()))
        );
        let text = render_deltas(&d);
        assert!(text.contains("+0.5000"));
    }

    #[test]
    fn text_table_layout() {
        let cats: BTreeMap<String, Category> =
            [("a".to_string(), Category::Hop(2)), ("b".to_string(), Category::Aggregation)].into();
        let r = aggregate("goalact", &[score("a", 1.0), score("b", 0.0)], &cats).unwrap();
        let text = render_text(&[r]);
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(header, ["Method", "2-hop", "Aggregation", "ALL"]);
        let row: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(row, ["goalact", "1.0000", "0.0000", "0.5000"]);
    }
}
