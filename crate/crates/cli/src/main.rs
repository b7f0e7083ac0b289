use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use goalact::backend::{
    Backend, BackendError, HttpBackend, RecordingBackend, ReplayBackend, ScriptedBackend,
};
use goalact::backend::ENV_MODEL;
use goalact::config::{Ablation, MethodKind, RunConfig};
use goalact::env::generator::generate;
use goalact::env::{fixtures, Category, Environment, Task};
use goalact::eval::score_task;
use goalact::exemplars::{bank_file, generate_bank, ExemplarBank};
use goalact::oracle::{NeverFinishing, OracleBackend};
use goalact::orchestrator::{run_task, RunContext};
use goalact::suite::{
    deltas_against_goalact, report_json, report_text, reports_from_scores, run_suite, Manifest, MethodSpec,
    SuiteInput,
};
use goalact::trajectory::{read_jsonl, write_jsonl, FailureKind, Trajectory};

/// Goal-driven agent runtime: fixtures, runs, suites and reports.
#[derive(Parser)]
#[command(name = "goalact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate task fixtures into a directory.
    Generate(GenerateArgs),
    /// Run one task with one method.
    Run(RunArgs),
    /// Run every task under one or more methods and write a report.
    Suite(SuiteArgs),
    /// Re-render a saved trajectory log without calling any backend.
    Replay(ReplayArgs),
    /// Rebuild the report of a finished suite run.
    Report(ReportArgs),
    /// Regenerate the few-shot exemplar banks.
    Exemplars(ExemplarArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// First seed; tasks use seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Hop count of k-hop tasks (shorthand for --category <k>hop).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    k: Option<u8>,
    /// Categories to generate (1hop..5hop, writing, aggregation). Default: all.
    #[arg(long, value_delimiter = ',')]
    category: Vec<String>,
    /// Tasks per category.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// scripted:oracle, scripted:never-finishing, scripted:<rules.jsonl>,
    /// cassette:<file>, record:<file>, or http.
    #[arg(long, default_value = "scripted:oracle")]
    backend: String,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_base: Option<String>,
    #[arg(long)]
    max_iterations: Option<u32>,
    /// Few-shot exemplars per prompt.
    #[arg(long)]
    exemplars: Option<usize>,
    /// GoalAct ablations (no_global_plan, no_searching, no_coding, no_writing).
    #[arg(long = "ablation", value_delimiter = ',')]
    ablations: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    fixtures: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "goalact")]
    method: String,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Append the trajectory to this JSONL file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    fixtures: PathBuf,
    /// Comma-separated methods, e.g. goalact,react,goalact-no_coding.
    #[arg(long, value_delimiter = ',', default_value = "goalact")]
    methods: Vec<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Tasks run concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Print readable transcripts instead of the log lines.
    #[arg(long)]
    transcript: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a suite run.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct ExemplarArgs {
    #[arg(long)]
    out: PathBuf,
}

enum Fault {
    Config(String),
    Backend(String),
}

impl Fault {
    fn code(&self) -> u8 {
        match self {
            Fault::Config(_) => 2,
            Fault::Backend(_) => 3,
        }
    }
}

fn config_fault(e: impl std::fmt::Display) -> Fault {
    Fault::Config(e.to_string())
}

fn read(path: &Path) -> Result<String, Fault> {
    fs::read_to_string(path).map_err(|e| Fault::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Fault> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Fault::Config(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Fault::Config(format!("{}: {e}", path.display())))
}

enum BackendSpec {
    Oracle,
    NeverFinishing,
    Rules(PathBuf),
    Cassette(PathBuf),
    Record(PathBuf),
    Http,
}

impl BackendSpec {
    fn parse(s: &str) -> Result<Self, Fault> {
        let existing = |p: &str| {
            let path = PathBuf::from(p);
            if path.is_file() {
                Ok(path)
            } else {
                Err(Fault::Config(format!("backend file {p} does not exist")))
            }
        };
        match s.split_once(':') {
            Some(("scripted", "oracle")) => Ok(Self::Oracle),
            Some(("scripted", "never-finishing")) => Ok(Self::NeverFinishing),
            Some(("scripted", p)) => existing(p).map(Self::Rules),
            Some(("cassette", p)) => existing(p).map(Self::Cassette),
            Some(("record", p)) if !p.is_empty() => Ok(Self::Record(PathBuf::from(p))),
            None if s == "http" => Ok(Self::Http),
            _ => Err(Fault::Config(format!("unknown backend {s:?}"))),
        }
    }

    fn is_live(&self) -> bool {
        matches!(self, Self::Http | Self::Record(_))
    }

    fn build(&self, method: MethodKind, config: &RunConfig, tasks: &[Task]) -> Result<Box<dyn Backend>, BackendError> {
        let io = |e: std::io::Error| BackendError::Protocol { reason: e.to_string() };
        Ok(match self {
            Self::Oracle => Box::new(OracleBackend::new(method, config, tasks)),
            Self::NeverFinishing => Box::new(NeverFinishing::default()),
            Self::Rules(p) => Box::new(ScriptedBackend::from_jsonl(p).map_err(io)?),
            Self::Cassette(p) => Box::new(ReplayBackend::open(p).map_err(io)?),
            Self::Http => Box::new(HttpBackend::new(config.http.clone())?),
            Self::Record(p) => Box::new(RecordingBackend::create(HttpBackend::new(config.http.clone())?, p).map_err(io)?),
        })
    }
}

/// File, then environment, then flags.
fn resolve_config(args: &ConfigArgs) -> Result<RunConfig, Fault> {
    let mut config = match &args.config {
        Some(p) => RunConfig::from_toml(&read(p)?).map_err(config_fault)?,
        None => RunConfig::default(),
    };
    config.http = config.http.with_env();
    if let Ok(m) = std::env::var(ENV_MODEL) {
        config.model = m;
    }
    if let Some(m) = &args.model {
        config.model = m.clone();
    }
    if let Some(b) = &args.api_base {
        config.http.api_base = b.clone();
    }
    if let Some(t) = args.max_iterations {
        config.max_iterations = t;
    }
    if let Some(n) = args.exemplars {
        config.exemplar_count = n;
    }
    for a in &args.ablations {
        config.ablations.insert(a.parse::<Ablation>().map_err(config_fault)?);
    }
    config.http.model = config.model.clone();
    config.validate().map_err(config_fault)?;
    Ok(config)
}

fn load_fixtures(dir: &Path) -> Result<(Environment, Vec<Task>), Fault> {
    let (env, tasks) = fixtures::load(dir).map_err(config_fault)?;
    if tasks.is_empty() {
        return Err(Fault::Config(format!("no tasks under {}", dir.join("tasks").display())));
    }
    Ok((env, tasks))
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Fault> {
    let mut categories: Vec<Category> = a
        .category
        .iter()
        .map(|c| c.parse::<Category>().map_err(Fault::Config))
        .collect::<Result<_, _>>()?;
    if let Some(k) = a.k {
        categories.push(Category::Hop(k));
    }
    if categories.is_empty() {
        categories = (1..=5).map(Category::Hop).chain([Category::Writing, Category::Aggregation]).collect();
    }
    if a.count == 0 {
        return Err(Fault::Config("--count must be at least 1".into()));
    }
    let generated: Vec<_> = categories
        .iter()
        .flat_map(|&c| (0..a.count).map(move |i| generate(c, a.seed + i)))
        .collect();
    fixtures::write(&a.out, &generated).map_err(config_fault)?;
    for g in &generated {
        println!("{}", g.task.id);
    }
    eprintln!("{} task(s) under {}", generated.len(), a.out.display());
    Ok(())
}

fn backend_failed(t: &Trajectory) -> bool {
    t.failure.as_ref().is_some_and(|f| f.kind == FailureKind::Backend)
}

fn cmd_run(a: RunArgs) -> Result<(), Fault> {
    let spec: MethodSpec = a.method.parse().map_err(config_fault)?;
    let backend_spec = BackendSpec::parse(&a.cfg.backend)?;
    let base = resolve_config(&a.cfg)?;
    let config = spec.config(&base);
    config.registry().map_err(config_fault)?;
    let (env, tasks) = load_fixtures(&a.fixtures)?;
    let task = tasks
        .iter()
        .find(|t| t.id == a.task)
        .ok_or_else(|| Fault::Config(format!("no task {} in {}", a.task, a.fixtures.display())))?;
    let backend = backend_spec
        .build(spec.method, &config, std::slice::from_ref(task))
        .map_err(|e| Fault::Backend(e.to_string()))?;
    let bank = ExemplarBank::builtin();
    let ctx = RunContext {
        env: &env,
        backend: backend.as_ref(),
        config: &config,
        exemplars: &bank,
    };
    let t = run_task(spec.method, task, ctx).map_err(config_fault)?;
    let score = score_task(task, &t).map_err(config_fault)?;
    if let Some(out) = &a.out {
        let mut text = fs::read_to_string(out).unwrap_or_default();
        text.push_str(&write_jsonl(std::slice::from_ref(&t)));
        write(out, &text)?;
    }
    println!("task: {}", t.task_id);
    println!("method: {}", t.method);
    println!("answer: {}", t.final_answer.as_deref().unwrap_or("(none)"));
    println!("termination: {:?} after {} step(s)", t.termination_reason, t.step_count);
    println!("score: {:.4}", score.s);
    if backend_failed(&t) {
        let detail = t.failure.map(|f| f.detail).unwrap_or_default();
        return Err(Fault::Backend(detail));
    }
    Ok(())
}

fn cmd_suite(a: SuiteArgs) -> Result<(), Fault> {
    let methods: Vec<MethodSpec> = a
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()
        .map_err(config_fault)?;
    let backend_spec = BackendSpec::parse(&a.cfg.backend)?;
    let config = resolve_config(&a.cfg)?;
    for m in &methods {
        m.config(&config).registry().map_err(config_fault)?;
    }
    let (env, tasks) = load_fixtures(&a.fixtures)?;
    let bank = ExemplarBank::builtin();
    let input = SuiteInput {
        env: &env,
        tasks: &tasks,
        methods: &methods,
        config: &config,
        exemplars: &bank,
        fixtures: a.fixtures.display().to_string(),
        jobs: a.jobs as usize,
    };
    if backend_spec.is_live() && a.jobs > 1 {
        eprintln!("note: live backend with --jobs {}; requests share one rate limit per method", a.jobs);
    }
    let factory = |spec: &MethodSpec, cfg: &RunConfig| backend_spec.build(spec.method, cfg, &tasks);
    let outcome = run_suite(&input, &factory).map_err(|e| match e {
        goalact::suite::SuiteError::Backend(b) => Fault::Backend(b.to_string()),
        other => config_fault(other),
    })?;
    outcome.write(&a.out).map_err(config_fault)?;
    match a.format {
        Format::Text => print!("{}", outcome.report_text()),
        Format::Json => print!("{}", outcome.report_json()),
    }
    eprintln!("results under {}", a.out.display());
    match outcome.backend_failures() {
        0 => Ok(()),
        n => Err(Fault::Backend(format!("{n} task run(s) ended on a backend failure"))),
    }
}

fn transcript(t: &Trajectory) -> String {
    format!(
        "== {} [{}]\nQuestion: {}\n{}Final answer: {}\nTermination: {:?} after {} step(s){}\n",
        t.task_id,
        t.method,
        t.question,
        t.history.render(),
        t.final_answer.as_deref().unwrap_or("(none)"),
        t.termination_reason,
        t.step_count,
        if t.degraded { " (degraded)" } else { "" }
    )
}

fn cmd_replay(a: ReplayArgs) -> Result<(), Fault> {
    let text = read(&a.trajectory)?;
    let trajectories = read_jsonl(&text).map_err(config_fault)?;
    if a.transcript {
        for t in &trajectories {
            print!("{}", transcript(t));
        }
    } else {
        print!("{}", write_jsonl(&trajectories));
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Fault> {
    let manifest: Manifest =
        serde_json::from_str(&read(&a.results.join("manifest.json"))?).map_err(config_fault)?;
    let scores = read(&a.results.join("scores.jsonl"))?;
    let reports = reports_from_scores(&manifest, &scores).map_err(config_fault)?;
    let deltas = deltas_against_goalact(&reports).map_err(config_fault)?;
    match a.format {
        Format::Text => print!("{}", report_text(&reports, deltas.as_ref())),
        Format::Json => print!("{}", report_json(&reports, deltas.as_ref())),
    }
    Ok(())
}

fn cmd_exemplars(a: ExemplarArgs) -> Result<(), Fault> {
    for m in MethodKind::ALL {
        let path = a.out.join(bank_file(m));
        write(&path, &write_jsonl(&generate_bank(m)))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Report(a) => cmd_report(a),
        Command::Exemplars(a) => cmd_exemplars(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Fault::Config(m) => ("configuration error", m),
                Fault::Backend(m) => ("backend error", m),
            };
            eprintln!("goalact: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
