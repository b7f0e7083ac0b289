use std::path::Path;

use goalact::config::MethodKind;
use goalact::exemplars::{bank_file, generate_bank, render_exemplar, ExemplarBank};
use goalact::plan::SkillKind;
use goalact::skills::SkillRegistry;
use goalact::trajectory::{write_jsonl, TerminationReason};

fn assets() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/exemplars"))
}

/// Set GOALACT_BLESS=1 to rewrite the committed banks.
#[test]
fn committed_banks_match_regeneration() {
    let bless = std::env::var_os("GOALACT_BLESS").is_some();
    for method in MethodKind::ALL {
        let fresh = write_jsonl(&generate_bank(method));
        let path = assets().join(bank_file(method));
        if bless {
            std::fs::write(&path, &fresh).unwrap();
            continue;
        }
        let committed = std::fs::read_to_string(&path).unwrap();
        assert_eq!(committed, fresh, "{} is stale; rerun with GOALACT_BLESS=1", path.display());
    }
}

#[test]
fn exemplars_are_finished_oracle_runs() {
    let bank = ExemplarBank::builtin();
    for method in MethodKind::ALL {
        let ex = bank.get(method);
        assert!(ex.len() >= 2, "{method:?}");
        for t in ex {
            assert_eq!(t.termination_reason, TerminationReason::Finish);
            assert!(t.exchanges.is_empty() && t.tool_calls.is_empty());
            assert!(render_exemplar(method, t).starts_with("Question: "));
        }
    }
}

#[test]
fn selection_respects_enabled_skills() {
    let bank = ExemplarBank::builtin();
    let full = SkillRegistry::default();
    assert_eq!(bank.select(MethodKind::GoalAct, &full, 2).len(), 2);
    let mut no_coding = SkillRegistry::default();
    no_coding.set_enabled(&SkillKind::Coding, false).unwrap();
    let picked = bank.select(MethodKind::GoalAct, &no_coding, 4);
    assert_eq!(picked.len(), 2);
    assert!(picked.iter().all(|p| !p.contains("Coding[")));
    assert!(bank.select(MethodKind::GoalAct, &full, 0).is_empty());
}

