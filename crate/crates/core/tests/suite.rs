use std::fs;

use goalact::backend::{Backend, BackendError};
use goalact::config::RunConfig;
use goalact::env::generator::generate;
use goalact::env::{Category, Environment, Task};
use goalact::exemplars::ExemplarBank;
use goalact::oracle::OracleBackend;
use goalact::suite::{run_suite, MethodSpec, SuiteInput, SuiteOutcome};

fn fixtures(categories: &[Category], per: u64) -> (Environment, Vec<Task>) {
    let mut env = Environment::new();
    let mut tasks = Vec::new();
    for &c in categories {
        for seed in 1..=per {
            let g = generate(c, seed);
            for t in g.tables {
                env.add_table(t).unwrap();
            }
            tasks.push(g.task);
        }
    }
    (env, tasks)
}

fn run(env: &Environment, tasks: &[Task], methods: &[&str], jobs: usize) -> SuiteOutcome {
    let methods: Vec<MethodSpec> = methods.iter().map(|m| m.parse().unwrap()).collect();
    let config = RunConfig::default();
    let bank = ExemplarBank::builtin();
    let input = SuiteInput {
        env,
        tasks,
        methods: &methods,
        config: &config,
        exemplars: &bank,
        fixtures: "generated".into(),
        jobs,
    };
    let factory = |spec: &MethodSpec, cfg: &RunConfig| -> Result<Box<dyn Backend>, BackendError> {
        Ok(Box::new(OracleBackend::new(spec.method, cfg, tasks)))
    };
    run_suite(&input, &factory).unwrap()
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "trajectories"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names.into_iter().filter(|p| p.is_file()) {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let (env, tasks) = fixtures(&[Category::Hop(2), Category::Writing, Category::Aggregation], 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&env, &tasks, &["goalact", "react"], 1).write(a.path()).unwrap();
    run(&env, &tasks, &["goalact", "react"], 4).write(b.path()).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, fb);
    let manifest = fs::read_to_string(a.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("scripted:oracle"));
    assert!(!manifest.contains("api_key"));
}

#[test]
fn report_rows_and_ablation_separation() {
    let (env, tasks) = fixtures(&[Category::Writing, Category::Aggregation], 4);
    let out = run(
        &env,
        &tasks,
        &["goalact", "goalact-no_coding", "goalact-no_writing", "plan_and_solve"],
        2,
    );
    let reports = out.reports();
    assert_eq!(reports.len(), 4);
    let col = |i: usize, c: &str| reports[i].column(c).unwrap();
    assert_eq!(col(0, "Aggregation"), 1.0);
    assert_eq!(col(1, "Aggregation"), 0.0);
    assert_eq!(col(0, "Writing"), 1.0);
    assert!(col(2, "Writing") < col(0, "Writing"));
    let text = out.report_text();
    assert!(text.starts_with("Method"));
    assert!(text.contains("goalact-no_coding"));
    assert!(text.contains("Delta vs best method other than goalact"));
    assert_eq!(out.backend_failures(), 0);
}

#[test]
fn reports_rebuild_from_scores() {
    let (env, tasks) = fixtures(&[Category::Hop(1), Category::Aggregation], 2);
    let dir = tempfile::tempdir().unwrap();
    let out = run(&env, &tasks, &["goalact", "codeact"], 1);
    out.write(dir.path()).unwrap();
    let manifest: goalact::suite::Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let scores = fs::read_to_string(dir.path().join("scores.jsonl")).unwrap();
    let reports = goalact::suite::reports_from_scores(&manifest, &scores).unwrap();
    let deltas = goalact::suite::deltas_against_goalact(&reports).unwrap();
    let text = goalact::suite::report_text(&reports, deltas.as_ref());
    assert_eq!(text, fs::read_to_string(dir.path().join("report.txt")).unwrap());
    assert_eq!(manifest, out.manifest);
}
