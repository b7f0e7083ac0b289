mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use goalact::backend::{Rule, ScriptedBackend};
use goalact::config::{Ablation, MethodKind, RunConfig};
use goalact::env::generator::generate;
use goalact::env::{Category, Environment, Scalar, Table, ToolCall, ToolSemantics};
use goalact::eval::{aggregate, success_rate, TaskScore};
use goalact::exemplars::ExemplarBank;
use goalact::oracle::task_backend;
use goalact::orchestrator::{run_task, RunContext};
use goalact::plan::{history_of, DEFAULT_MAX_PLAN_LEN};
use goalact::planner::{
    parse_plan_response, render_plan_response, update_global_plan, PlannerConfig, PlannerError, PlannerInputs,
};
use goalact::sandbox::{eval_script, SandboxLimits};
use goalact::skills::SkillRegistry;
use goalact::trajectory::{Session, Trajectory};

use common::*;

fn inputs() -> PlannerInputs {
    PlannerInputs {
        question: "Which court heard the case?".into(),
        tool_prompt: "get_case(case_no)".into(),
        table_prompt: "Case(case_no, court)".into(),
        memory: Vec::new(),
    }
}

fn plan_once(raw: &str, executed: usize) -> (goalact::plan::GlobalPlan, Result<goalact::plan::GlobalPlan, PlannerError>) {
    let backend = ScriptedBackend::new("fuzz", vec![Rule::contains("any", Vec::new(), raw)]);
    let mut session = Session::new(&backend, "m", 0.0);
    let prev = executed_plan(executed, 3);
    let prev_opt = (executed > 0).then_some(&prev);
    let out = update_global_plan(&inputs(), &SkillRegistry::default(), prev_opt, &mut session, &PlannerConfig::default());
    (prev, out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn planner_accepts_exactly_the_valid_plans(seed in any::<u64>(), executed in 0usize..4) {
        let fuzz = FuzzPlan::random(&mut ChaCha8Rng::seed_from_u64(seed));
        let expected = fuzz.expected(executed, DEFAULT_MAX_PLAN_LEN);
        let (prev, got) = plan_once(&fuzz.render(), executed);
        match (expected, got) {
            (Ok(pending), Ok(plan)) => {
                prop_assert_eq!(plan_invariants_hold(&plan, DEFAULT_MAX_PLAN_LEN), Ok(()));
                prop_assert_eq!(&plan.steps[..executed], &prev.steps[..executed]);
                let got: Vec<_> = plan.steps[executed..]
                    .iter()
                    .map(|s| (s.action.kind.clone(), s.action.objective.clone()))
                    .collect();
                prop_assert_eq!(got, pending);
            }
            (Err(want), Err(PlannerError::PlanningFailed { attempts, last })) => {
                prop_assert_eq!(attempts, 2);
                prop_assert!(error_matches(&want, &last), "want {want:?}, got {last:?}");
            }
            (want, got) => prop_assert!(false, "want {want:?}, got {got:?}"),
        }
    }

    #[test]
    fn parsing_is_idempotent(seed in any::<u64>()) {
        let raw = FuzzPlan::random(&mut ChaCha8Rng::seed_from_u64(seed)).render();
        let registry = SkillRegistry::default();
        if let Ok(once) = parse_plan_response(&raw, &registry) {
            let twice = parse_plan_response(&render_plan_response(&once), &registry).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn score_is_bounded_and_exact(
        keys in prop::collection::vec("[ab\u{e9}]{0,3}|e\u{301}", 1..5),
        output in "[ab\u{e9} ]{0,12}(e\u{301})?[ab]{0,3}",
    ) {
        let m = success_rate(&keys, &output).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.s));
        prop_assert_eq!(m.s, brute_success(&keys, &output));
        prop_assert_eq!(m.s == 1.0, keys.iter().all(|k| brute_contains(&output, k)));
        prop_assert!(m.matched.is_disjoint(&m.missing));
        prop_assert_eq!(m.matched.len() + m.missing.len(), keys.iter().collect::<std::collections::BTreeSet<_>>().len());
    }

    #[test]
    fn appending_never_lowers_the_score(
        keys in prop::collection::vec("[abc]{1,3}", 1..5),
        output in "[abc ]{0,10}",
        suffix in "[abc ]{0,10}",
    ) {
        let before = success_rate(&keys, &output).unwrap().s;
        let after = success_rate(&keys, &format!("{output}{suffix}")).unwrap().s;
        prop_assert!(after >= before);
    }

    #[test]
    fn aggregate_ignores_score_order(
        scores in prop::collection::vec((0u8..3, 0u32..=4), 1..30),
        shuffle_seed in any::<u64>(),
    ) {
        let cats = [Category::Hop(1), Category::Writing, Category::Aggregation];
        let mut categories = BTreeMap::new();
        let list: Vec<TaskScore> = scores
            .iter()
            .enumerate()
            .map(|(i, (c, q))| {
                let id = format!("t{i:03}");
                categories.insert(id.clone(), cats[*c as usize]);
                TaskScore {
                    task_id: id,
                    s: *q as f64 / 3.0,
                    matched: Default::default(),
                    missing: Default::default(),
                    middle_coverage: None,
                    step_count: 1,
                    degraded: false,
                }
            })
            .collect();
        let mut shuffled = list.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = aggregate("m", &list, &categories).unwrap();
        let b = aggregate("m", &shuffled, &categories).unwrap();
        prop_assert_eq!(a.all.to_bits(), b.all.to_bits());
        prop_assert_eq!(&a, &b);
        let brute = list.iter().map(|s| s.s).sum::<f64>() / list.len() as f64;
        prop_assert!((a.all - brute).abs() < 1e-12);
    }

    #[test]
    fn filter_matches_a_row_scan(
        rows in prop::collection::vec(("[A-D]", 0i64..4), 0..25),
        wanted in "[A-E]",
    ) {
        let mut table = Table::new("Case", "case_no", &["case_no", "court", "year"])
            .with_tools(&[ToolSemantics::GetRecord, ToolSemantics::FilterRecords]);
        for (i, (court, year)) in rows.iter().enumerate() {
            table.rows.push(BTreeMap::from([
                ("case_no".to_string(), Scalar::text(format!("C{i}"))),
                ("court".to_string(), Scalar::text(court.as_str())),
                ("year".to_string(), Scalar::Int(*year)),
            ]));
        }
        let env = Environment::from_tables([table.clone()]).unwrap();
        let tool = env.tool_for("Case", ToolSemantics::FilterRecords).unwrap().name.clone();
        let got = env.invoke_tool(&ToolCall::new(&tool, "court", wanted.as_str())).unwrap();
        let brute: Vec<_> = table.rows.iter().filter(|r| r["court"] == Scalar::text(wanted.as_str())).cloned().collect();
        prop_assert_eq!(got, brute);
    }

    #[test]
    fn sandbox_is_deterministic_and_within_budget(
        n in 0i64..40,
        body in prop::sample::select(vec![
            "total = total + i",
            "total = total + len(filter_records(Case, court, \"A\"))",
            "if i % 3 == 0 { total = total + 1 }",
            "row = get_record(Case, case_no, \"C1\")\n    total = total + row.year",
        ]),
        steps in 1u64..400,
        calls in 1u32..12,
    ) {
        let mut table = Table::new("Case", "case_no", &["case_no", "court", "year"]);
        for i in 0..5 {
            table.rows.push(BTreeMap::from([
                ("case_no".to_string(), Scalar::text(format!("C{i}"))),
                ("court".to_string(), Scalar::text(if i % 2 == 0 { "A" } else { "B" })),
                ("year".to_string(), Scalar::Int(2000 + i)),
            ]));
        }
        let env = Environment::from_tables([table]).unwrap();
        let script = format!("total = 0\nfor i in range({n}) {{\n    {body}\n}}\nreturn total");
        let limits = SandboxLimits { max_eval_steps: steps, max_tool_calls: calls, max_output_bytes: 4096 };
        let a = eval_script(&script, &env, None, &limits);
        let b = eval_script(&script, &env, None, &limits);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.steps_used <= steps);
        prop_assert!(a.tool_calls_used <= calls);
        prop_assert_eq!(a.trace.len(), a.tool_calls_used as usize);
    }
}

fn run(method: MethodKind, config: &RunConfig, category: Category, seed: u64) -> Trajectory {
    let g = generate(category, seed);
    let env = Environment::from_tables(g.tables.clone()).unwrap();
    let backend = task_backend(method, config, &g.task);
    let bank = ExemplarBank::builtin();
    let ctx = RunContext {
        env: &env,
        backend: &backend,
        config,
        exemplars: &bank,
    };
    run_task(method, &g.task, ctx).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_round_trip(
        seed in 1u64..10_000,
        c in 0usize..7,
        m in 0usize..5,
        ablation in prop::option::of(prop::sample::select(vec![Ablation::NoCoding, Ablation::NoWriting, Ablation::NoGlobalPlan])),
    ) {
        let method = MethodKind::ALL[m];
        let mut config = RunConfig::default();
        if method == MethodKind::GoalAct {
            config.ablations.extend(ablation);
        }
        let t = run(method, &config, CATEGORIES[c], seed);
        let line = t.to_line();
        let back = Trajectory::from_line(&line).unwrap();
        prop_assert_eq!(back.to_line(), line);
        prop_assert_eq!(&back, &t);
        prop_assert!(t.step_count <= config.max_iterations);
    }

    #[test]
    fn executed_history_is_never_rewritten(seed in any::<u64>(), c in 0usize..7) {
        let g = generate(CATEGORIES[c], seed % 5000 + 1);
        let env = Environment::from_tables(g.tables.clone()).unwrap();
        let backend = ChaosPlanner::new(seed);
        let config = RunConfig::default();
        let bank = ExemplarBank::empty();
        let ctx = RunContext { env: &env, backend: &backend, config: &config, exemplars: &bank };
        let t = run_task(MethodKind::GoalAct, &g.task, ctx).unwrap();
        for pair in t.revisions.windows(2) {
            let (before, after) = (history_of(&pair[0]), history_of(&pair[1]));
            prop_assert!(before.is_prefix_of(&after));
            prop_assert_eq!(after.len(), before.len() + 1);
        }
        if let Some(last) = t.revisions.last() {
            prop_assert!(history_of(last).is_prefix_of(&t.history));
        }
    }
}
