use std::path::PathBuf;
use std::time::{Duration, Instant};

use atgforge::leanrepl::{LeanConfig, LeanRepl, ReplError, ReplResponse};
use atgforge::prover::Prover;
use atgforge::record::{tactics, Premise, StateTacticPair, TacticStep, TheoremRecord};
use serde_json::Value;

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

/// Parse into the typed shape, re-serialize, and compare as JSON values
/// (key order is not significant).
fn lossless<T: serde::de::DeserializeOwned + serde::Serialize>(name: &str) -> T {
    let text = golden(name);
    let typed: T = serde_json::from_str(&text).unwrap();
    let back = serde_json::to_value(&typed).unwrap();
    let orig: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(back, orig, "{name} did not round-trip");
    typed
}

#[test]
fn golden_replies_round_trip() {
    let r: ReplResponse = lossless("new_thm_reply.json");
    assert_eq!(r.env, Some(0));
    assert_eq!(r.proofstates.as_deref(), Some(&[0][..]));
    assert_eq!(r.finish, Some(false));
    assert!(r.used_sorry());
    assert!(!r.has_error());
    let sorry = &r.sorries.as_ref().unwrap()[0];
    assert_eq!((sorry.pos.line, sorry.pos.column), (1, 58));
    assert_eq!(sorry.end_pos.map(|p| p.column), Some(63));

    let pair: StateTacticPair = lossless("run_all_tactics_pair.json");
    assert_eq!(pair.pp, "rw [abelidentity_eq_add]");
    assert_eq!(pair.goals_after.len(), 2);
    assert!(pair.goals_after[1].starts_with("case hn"));

    for f in ["command_reply.json", "tactic_reply.json", "error_reply.json"] {
        let _: ReplResponse = lossless(f);
    }
    let err: ReplResponse = serde_json::from_str(&golden("error_reply.json")).unwrap();
    assert!(err.has_error());
}

#[test]
fn unknown_fields_are_preserved() {
    let text = r#"{"env": 3, "time": 0.25, "messages": [{"severity": "info", "pos": {"line": 2, "column": 1}, "data": "ok", "caption": "x"}]}"#;
    let r: ReplResponse = serde_json::from_str(text).unwrap();
    assert_eq!(serde_json::to_value(&r).unwrap(), serde_json::from_str::<Value>(text).unwrap());
}

fn fake() -> LeanConfig {
    LeanConfig {
        repl_path: PathBuf::from("python3"),
        args: vec![concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fake_repl.py").to_string()],
        timeout_secs: 5,
        ..LeanConfig::default()
    }
}

fn thm(goal: &str, proof: &[&str]) -> TheoremRecord {
    TheoremRecord::seed("t", vec![Premise::new("x", "ℕ")], goal, tactics(proof))
}

#[test]
fn prover_surface_over_fake_repl() {
    let mut repl = LeanRepl::start(fake()).unwrap();
    let init = repl.get_init_state(&thm("x + 0 = x", &[])).unwrap();
    assert!(!init.error && !init.finished);
    assert_eq!(init.goals, vec!["⊢ x + 0 = x".to_string()]);
    let next = repl.run_tactic(&init, &TacticStep::parse("rw [add_zero]")).unwrap();
    assert_eq!(next.goals.len(), 1);
    assert!(next.check_invariants());
    let done = repl.run_tactic(&next, &TacticStep::parse("done")).unwrap();
    assert!(done.finished);
    let failed = repl.run_tactic(&next, &TacticStep::parse("fail")).unwrap();
    assert!(failed.error);
    // error absorption
    assert!(repl.run_tactic(&failed, &TacticStep::parse("done")).unwrap().error);
    assert!(repl.run_have_tactic(&next, &TacticStep::parse("rfl")).unwrap().error);

    let bad = repl.get_init_state(&thm("unbalanced (x = x", &[])).unwrap();
    assert!(bad.error);

    let v = repl.is_correct_and_finished(&thm("x = x", &["rfl"])).unwrap();
    assert!(v.correct && v.finished);
    let v = repl.is_correct_and_finished(&thm("x = x", &["sorry"])).unwrap();
    assert!(v.correct && !v.finished);
    let v = repl.is_correct_and_finished(&thm("x = x", &["bad_tactic"])).unwrap();
    assert!(!v.correct && !v.finished);
}

#[test]
fn import_and_extraction() {
    let mut repl = LeanRepl::start(fake()).unwrap();
    let env = repl.run_import("import Mathlib\nopen Finset Nat").unwrap();
    assert!(env >= 1);
    assert!(matches!(repl.run_import("import Missing"), Err(ReplError::Protocol(_))));
    let pairs = repl
        .run_all_tactics("theorem t (x : ℕ) : x + 0 = x := by\n  rw [add_zero]\n  rfl")
        .unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0].pp, "rw [add_zero]");
    assert!(pairs[1].goals_after.is_empty());
}

#[test]
fn crash_restarts_and_invalidates_states() {
    let mut repl = LeanRepl::start(fake()).unwrap();
    let init = repl.get_init_state(&thm("x + 0 = x", &[])).unwrap();
    let crashed = repl.run_tactic(&init, &TacticStep::parse("crash")).unwrap();
    assert!(crashed.error);
    // the old state id belongs to the dead process
    let stale = repl.run_tactic(&init, &TacticStep::parse("rw [add_zero]")).unwrap();
    assert!(stale.error);
    let fresh = repl.get_init_state(&thm("x + 0 = x", &[])).unwrap();
    assert!(!fresh.error);
    assert!(!repl.run_tactic(&fresh, &TacticStep::parse("rw [add_zero]")).unwrap().error);
}

#[test]
fn timeout_is_enforced() {
    let mut cfg = fake();
    cfg.timeout_secs = 1;
    let mut repl = LeanRepl::start(cfg).unwrap();
    let init = repl.get_init_state(&thm("x = x", &[])).unwrap();
    let started = Instant::now();
    let out = repl.run_tactic(&init, &TacticStep::parse("hang")).unwrap();
    assert!(out.error);
    assert!(started.elapsed() < Duration::from_secs(10));
    let again = repl.get_init_state(&thm("x = x", &[])).unwrap();
    assert!(!again.error);
}

#[test]
fn missing_executable_is_backend_unavailable() {
    let cfg = LeanConfig {
        repl_path: PathBuf::from("/nonexistent/lean-repl"),
        ..LeanConfig::default()
    };
    assert!(matches!(LeanRepl::start(cfg), Err(ReplError::Spawn(_))));
}
