//! Suite runner: every task under every method, with run manifest,
//! trajectory logs, scores and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::config::{Ablation, ConfigError, MethodKind, RunConfig};
use crate::env::{Category, Environment, Task};
use crate::eval::{
    aggregate, compare_methods, render_deltas, render_text, score_task, DeltaTable, EvalError, SuiteReport, TaskScore,
};
use crate::exemplars::ExemplarBank;
use crate::orchestrator::{run_task, RunContext};
use crate::par;
use crate::trajectory::{write_jsonl, FailureKind, Trajectory};

/// A method plus GoalAct ablations, written `goalact-no_coding-no_writing`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: MethodKind,
    pub ablations: BTreeSet<Ablation>,
}

impl MethodSpec {
    pub fn plain(method: MethodKind) -> Self {
        Self {
            method,
            ablations: BTreeSet::new(),
        }
    }

    /// `base` with this spec's ablations added.
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        c.ablations.extend(self.ablations.iter().copied());
        if self.method != MethodKind::GoalAct {
            c.ablations.clear();
        }
        c
    }

    pub fn label(&self, base: &RunConfig) -> String {
        self.config(base).method_label(self.method)
    }
}

impl FromStr for MethodSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split('-');
        let method: MethodKind = parts.next().unwrap_or_default().parse()?;
        let ablations = parts.map(str::parse).collect::<Result<BTreeSet<Ablation>, _>>()?;
        if !ablations.is_empty() && method != MethodKind::GoalAct {
            return Err(ConfigError(format!("ablations apply to goalact only, got {s:?}")));
        }
        Ok(Self { method, ablations })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method.name())?;
        for a in &self.ablations {
            write!(f, "-{}", a.name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub id: String,
    pub category: Category,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestMethod {
    pub label: String,
    pub spec: String,
    pub backend: String,
}

/// Everything needed to reproduce a run. Carries no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub fixtures: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub methods: Vec<ManifestMethod>,
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("no tasks to run")]
    NoTasks,
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Makes the backend used for one method.
pub type BackendFactory<'a> = dyn Fn(&MethodSpec, &RunConfig) -> Result<Box<dyn Backend>, BackendError> + Sync + 'a;

pub struct SuiteInput<'a> {
    pub env: &'a Environment,
    pub tasks: &'a [Task],
    pub methods: &'a [MethodSpec],
    pub config: &'a RunConfig,
    pub exemplars: &'a ExemplarBank,
    pub fixtures: String,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub label: String,
    pub trajectories: Vec<Trajectory>,
    pub scores: Vec<TaskScore>,
    pub report: SuiteReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub manifest: Manifest,
    pub runs: Vec<MethodRun>,
    pub deltas: Option<DeltaTable>,
}

impl SuiteOutcome {
    pub fn reports(&self) -> Vec<SuiteReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }

    /// Trajectories that ended on a backend failure.
    pub fn backend_failures(&self) -> usize {
        self.runs
            .iter()
            .flat_map(|r| &r.trajectories)
            .filter(|t| t.failure.as_ref().is_some_and(|f| f.kind == FailureKind::Backend))
            .count()
    }

    pub fn report_text(&self) -> String {
        report_text(&self.reports(), self.deltas.as_ref())
    }

    pub fn report_json(&self) -> String {
        report_json(&self.reports(), self.deltas.as_ref())
    }

    /// Writes `manifest.json`, `trajectories/<label>.jsonl`, `scores.jsonl`,
    /// `report.txt` and `report.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SuiteError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SuiteError::Io { path, source }
        };
        let tdir = dir.join("trajectories");
        fs::create_dir_all(&tdir).map_err(io(&tdir))?;
        let put = |path: &Path, text: &str| fs::write(path, text).map_err(io(path));
        put(
            &dir.join("manifest.json"),
            &(serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n"),
        )?;
        let mut scores = String::new();
        for run in &self.runs {
            put(&tdir.join(format!("{}.jsonl", run.label)), &write_jsonl(&run.trajectories))?;
            for s in &run.scores {
                let mut v = serde_json::to_value(s).expect("scores serialize");
                v["method"] = serde_json::Value::String(run.label.clone());
                scores.push_str(&serde_json::to_string(&v).expect("json renders"));
                scores.push('\n');
            }
        }
        put(&dir.join("scores.jsonl"), &scores)?;
        put(&dir.join("report.txt"), &self.report_text())?;
        put(&dir.join("report.json"), &self.report_json())?;
        Ok(())
    }
}

pub fn manifest(input: &SuiteInput<'_>, backends: &[String]) -> Manifest {
    let mut tasks: Vec<ManifestTask> = input
        .tasks
        .iter()
        .map(|t| ManifestTask {
            id: t.id.clone(),
            category: t.category,
            seed: t.seed,
        })
        .collect();
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        fixtures: input.fixtures.clone(),
        config: input.config.clone(),
        config_hash: input.config.hash(),
        methods: input
            .methods
            .iter()
            .zip(backends)
            .map(|(m, b)| ManifestMethod {
                label: m.label(input.config),
                spec: m.to_string(),
                backend: b.clone(),
            })
            .collect(),
        tasks,
    }
}

/// Runs every method over every task. Tasks are processed in id order and
/// may run in parallel; results do not depend on `jobs`.
pub fn run_suite(input: &SuiteInput<'_>, backend_for: &BackendFactory<'_>) -> Result<SuiteOutcome, SuiteError> {
    if input.tasks.is_empty() {
        return Err(SuiteError::NoTasks);
    }
    input.config.validate()?;
    let mut tasks: Vec<&Task> = input.tasks.iter().collect();
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    for w in tasks.windows(2) {
        if w[0].id == w[1].id {
            return Err(SuiteError::DuplicateTask(w[0].id.clone()));
        }
    }
    let categories: BTreeMap<String, Category> = tasks.iter().map(|t| (t.id.clone(), t.category)).collect();

    let mut runs = Vec::new();
    let mut identities = Vec::new();
    for spec in input.methods {
        let config = spec.config(input.config);
        config.registry()?;
        let backend = backend_for(spec, &config)?;
        identities.push(backend.identity());
        let ctx = RunContext {
            env: input.env,
            backend: backend.as_ref(),
            config: &config,
            exemplars: input.exemplars,
        };
        let results = par::map(&tasks, input.jobs, |t| run_task(spec.method, t, ctx));
        let trajectories = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let scores = tasks
            .iter()
            .zip(&trajectories)
            .map(|(t, tr)| score_task(t, tr))
            .collect::<Result<Vec<_>, _>>()?;
        let label = spec.label(input.config);
        let report = aggregate(&label, &scores, &categories)?;
        runs.push(MethodRun {
            label,
            trajectories,
            scores,
            report,
        });
    }
    let reports: Vec<SuiteReport> = runs.iter().map(|r| r.report.clone()).collect();
    let deltas = deltas_against_goalact(&reports)?;
    Ok(SuiteOutcome {
        manifest: manifest(input, &identities),
        runs,
        deltas,
    })
}

/// Deltas against plain GoalAct, when it ran alongside another method.
pub fn deltas_against_goalact(reports: &[SuiteReport]) -> Result<Option<DeltaTable>, EvalError> {
    let reference = MethodKind::GoalAct.name();
    if reports.len() < 2 || !reports.iter().any(|r| r.method == reference) {
        return Ok(None);
    }
    compare_methods(reports, reference).map(Some)
}

pub fn report_text(reports: &[SuiteReport], deltas: Option<&DeltaTable>) -> String {
    let mut out = render_text(reports);
    if let Some(d) = deltas {
        out.push('\n');
        out.push_str(&render_deltas(d));
    }
    out
}

pub fn report_json(reports: &[SuiteReport], deltas: Option<&DeltaTable>) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        reports: &'a [SuiteReport],
        #[serde(skip_serializing_if = "Option::is_none")]
        deltas: Option<&'a DeltaTable>,
    }
    serde_json::to_string_pretty(&Doc { reports, deltas }).expect("reports serialize") + "\n"
}

/// Reads `scores.jsonl` back into per-method reports, in manifest order.
pub fn reports_from_scores(manifest: &Manifest, scores_jsonl: &str) -> Result<Vec<SuiteReport>, SuiteError> {
    let categories: BTreeMap<String, Category> = manifest.tasks.iter().map(|t| (t.id.clone(), t.category)).collect();
    let mut by_method: BTreeMap<String, Vec<TaskScore>> = BTreeMap::new();
    for (i, line) in scores_jsonl.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |e: serde_json::Error| SuiteError::Io {
            path: format!("scores.jsonl line {}", i + 1),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        };
        let v: serde_json::Value = serde_json::from_str(line).map_err(bad)?;
        let method = v["method"].as_str().unwrap_or_default().to_string();
        let score: TaskScore = serde_json::from_value(v).map_err(bad)?;
        by_method.entry(method).or_default().push(score);
    }
    manifest
        .methods
        .iter()
        .map(|m| {
            let scores = by_method.remove(&m.label).unwrap_or_default();
            aggregate(&m.label, &scores, &categories).map_err(SuiteError::from)
        })
        .collect()
}
