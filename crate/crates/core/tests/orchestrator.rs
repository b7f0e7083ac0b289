use goalact::backend::Backend;
use goalact::config::{Ablation, MethodKind, RunConfig};
use goalact::env::generator::generate;
use goalact::env::{Category, Environment, GeneratedTask};
use goalact::exemplars::ExemplarBank;
use goalact::oracle::{task_backend, NeverFinishing};
use goalact::orchestrator::{run_task, RunContext};
use goalact::trajectory::{Purpose, TerminationReason, Trajectory};

const CATEGORIES: [Category; 7] = [
    Category::Hop(1),
    Category::Hop(2),
    Category::Hop(3),
    Category::Hop(4),
    Category::Hop(5),
    Category::Writing,
    Category::Aggregation,
];

fn run_with(method: MethodKind, config: &RunConfig, g: &GeneratedTask, backend: &dyn Backend) -> Trajectory {
    let env = Environment::from_tables(g.tables.clone()).unwrap();
    let bank = ExemplarBank::builtin();
    let ctx = RunContext {
        env: &env,
        backend,
        config,
        exemplars: &bank,
    };
    run_task(method, &g.task, ctx).unwrap()
}

fn run(method: MethodKind, config: &RunConfig, g: &GeneratedTask) -> Trajectory {
    let backend = task_backend(method, config, &g.task);
    run_with(method, config, g, &backend)
}

fn solved(t: &Trajectory, g: &GeneratedTask) -> usize {
    let answer = t.final_answer.clone().unwrap_or_default();
    g.task.key_answers.iter().filter(|k| answer.contains(k.as_str())).count()
}

#[test]
fn goalact_solves_every_category() {
    let config = RunConfig::default();
    for c in CATEGORIES {
        let g = generate(c, 3);
        let t = run(MethodKind::GoalAct, &config, &g);
        assert_eq!(t.termination_reason, TerminationReason::Finish, "{c}: {t:#?}");
        assert_eq!(solved(&t, &g), g.task.key_answers.len(), "{c}: {:?}", t.final_answer);
        assert!(t.step_count as usize <= g.task.reference_actions() + 2, "{c}");
        assert!(!t.degraded);
        assert_eq!(t.revisions.len() as u32, t.step_count);
    }
}

#[test]
fn ablations_lose_capability() {
    let mut config = RunConfig::default();
    config.ablations.insert(Ablation::NoCoding);
    let g = generate(Category::Aggregation, 5);
    let t = run(MethodKind::GoalAct, &config, &g);
    assert_eq!(t.termination_reason, TerminationReason::MaxIterations);
    assert_eq!(t.step_count, 10);
    assert_eq!(solved(&t, &g), 0);

    let mut config = RunConfig::default();
    config.ablations.insert(Ablation::NoWriting);
    let g = generate(Category::Writing, 5);
    let t = run(MethodKind::GoalAct, &config, &g);
    assert_eq!(solved(&t, &g), 2);

    let mut config = RunConfig::default();
    config.ablations.insert(Ablation::NoSearching);
    let g = generate(Category::Hop(3), 5);
    let t = run(MethodKind::GoalAct, &config, &g);
    assert_eq!(solved(&t, &g), 1, "{t:#?}");
    assert_eq!(t.step_count, 2);
}

#[test]
fn stepwise_variant_records_no_revisions() {
    let mut config = RunConfig::default();
    config.ablations.insert(Ablation::NoGlobalPlan);
    let g = generate(Category::Hop(2), 8);
    let t = run(MethodKind::GoalAct, &config, &g);
    assert_eq!(solved(&t, &g), 1);
    assert!(t.revisions.is_empty());
    assert_eq!(t.count_purpose(&Purpose::NextStep), 3);
    assert_eq!(t.method, "goalact-no_global_plan");
}

#[test]
fn baselines_run_on_the_oracle() {
    let config = RunConfig::default();
    for method in [
        MethodKind::PlanAndSolve,
        MethodKind::PlanAndExecute,
        MethodKind::ReAct,
        MethodKind::CodeAct,
    ] {
        let g = generate(Category::Hop(3), 11);
        let t = run(method, &config, &g);
        assert_eq!(t.termination_reason, TerminationReason::Finish, "{method:?}: {t:#?}");
        assert_eq!(solved(&t, &g), 1, "{method:?}");
    }
    let g = generate(Category::Aggregation, 11);
    assert_eq!(solved(&run(MethodKind::CodeAct, &config, &g), &g), 1);
    assert_eq!(solved(&run(MethodKind::ReAct, &config, &g), &g), 0);
    let t = run(MethodKind::PlanAndSolve, &config, &g);
    assert_eq!(t.revisions.len(), 1);
    assert_eq!(t.count_purpose(&Purpose::Planning), 1);
}

#[test]
fn never_finishing_backend_hits_the_cap() {
    let config = RunConfig::default();
    let g = generate(Category::Hop(1), 1);
    for method in MethodKind::ALL {
        let backend = NeverFinishing::default();
        let t = run_with(method, &config, &g, &backend);
        assert_eq!(t.termination_reason, TerminationReason::MaxIterations, "{method:?}");
        assert_eq!(t.step_count, 10);
        assert_eq!(t.history.len(), 10, "{method:?}");
    }
}

#[test]
fn backend_outage_is_fatal_with_degraded_answer() {
    let config = RunConfig::default();
    let g = generate(Category::Hop(1), 1);
    let backend = goalact::backend::ScriptedBackend::new("empty", Vec::new());
    let t = run_with(MethodKind::GoalAct, &config, &g, &backend);
    assert_eq!(t.termination_reason, TerminationReason::FatalError);
    assert!(t.degraded);
    assert_eq!(t.final_answer, None);
    assert_eq!(t.failure.unwrap().kind, goalact::trajectory::FailureKind::Backend);
}
