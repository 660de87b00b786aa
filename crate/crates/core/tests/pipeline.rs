mod common;

use std::path::Path;
use std::process::Command;

use atgforge::corpus::seed_theorems;
use atgforge::pipeline::{
    compute_stats, export_finetune_data, par_map, render_table, run_atg4ci, IterationEntry, IterationLedger,
    PipelineConfig, PipelineError,
};
use atgforge::prover::{MockProver, Prover};
use atgforge::record::{read_jsonl, tactics, write_jsonl, DatasetStats, Premise, StatCategory, StateTacticPair, TheoremRecord};
use atgforge::suggest::InstructionRecord;
use atgforge::validate::{classify, Verdict};

fn config(out: &Path, n: usize) -> PipelineConfig {
    PipelineConfig {
        out_dir: out.to_path_buf(),
        max_iterations: n,
        ..PipelineConfig::default()
    }
}

#[test]
fn small_run_produces_verified_records() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), 1);
    cfg.suggest.t = 4;
    cfg.search.simulations_per_decision = 20;
    let ledger = run_atg4ci(&cfg).unwrap();
    assert_eq!(ledger.seeds, 10);
    assert_eq!(ledger.iterations.len(), 1);
    let stats = &ledger.iterations[0].stats;
    assert!(stats.n_candidate() > 0 && stats.n_new() > 0);
    let mut prover = MockProver::default();
    let roots: Vec<String> = seed_theorems().into_iter().map(|s| s.name).collect();
    for r in &ledger.e_star {
        assert_eq!(classify(r, &mut prover).unwrap().verdict, Verdict::Correct, "{}", r.name);
        let p = r.provenance.as_ref().expect("provenance");
        assert!(roots.contains(&p.root_name));
        assert!(p.path_id.starts_with(&format!("{}/p", p.root_name)));
    }
}

#[test]
fn zero_iterations_is_one_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let ledger = run_atg4ci(&config(&tmp.path().join("a"), 0)).unwrap();
    assert_eq!(ledger.iterations.len(), 1);
    let (once, _) = atgforge::validate::dedup(ledger.iterations[0].validated.clone());
    assert_eq!(ledger.e_star, once);
}

#[test]
fn one_tactic_seed_gives_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let seeds = tmp.path().join("seeds.jsonl");
    let seed = TheoremRecord::seed("only", vec![Premise::new("x", "ℕ")], "x = x", tactics(&["rfl"]));
    write_jsonl(&seeds, &[seed]).unwrap();
    let mut cfg = config(&tmp.path().join("out"), 2);
    cfg.seeds = Some(seeds);
    let ledger = run_atg4ci(&cfg).unwrap();
    assert_eq!(ledger.p3s, 0);
    assert!(ledger.e_star.is_empty());
    assert_eq!(compute_stats(&ledger).total.n_candidate(), 0);
}

#[test]
fn unreadable_seeds_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(&tmp.path().join("out"), 1);
    cfg.seeds = Some(tmp.path().join("missing.jsonl"));
    assert!(matches!(run_atg4ci(&cfg), Err(PipelineError::Seeds(_))));
}

#[test]
fn e_star_grows_monotonically_and_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), 3);
    cfg.suggest.t = 4;
    cfg.search.simulations_per_decision = 10;
    let ledger = run_atg4ci(&cfg).unwrap();
    let sizes: Vec<usize> = ledger.iterations.iter().map(|e| e.e_star_size).collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
    assert_eq!(*sizes.last().unwrap(), ledger.e_star.len());
    let loaded = IterationLedger::load(tmp.path()).unwrap();
    assert_eq!(loaded, ledger);
}

#[test]
fn stats_tables_and_histograms() {
    let entry = |iteration, c, k| IterationEntry {
        iteration,
        stats: DatasetStats::from_steps(10, &[1, 1, 2, 3], &vec![1; c], &vec![2; k]),
        ..Default::default()
    };
    let ledger = IterationLedger {
        iterations: vec![entry(1, 2, 1), entry(2, 1, 0)],
        ..Default::default()
    };
    let report = compute_stats(&ledger);
    assert_eq!(report.iterations[0].stats.n_new(), 3);
    assert_eq!(report.total.n_new(), 4);
    for cat in StatCategory::ALL {
        let sum: u64 = report.total.histogram(cat).values().sum();
        assert_eq!(sum, report.total.count(cat));
    }
    let table = render_table(&report);
    for label in ["# Candidate", "# Deduplicated", "# Correct", "# Corrected", "# New (Subtotal)"] {
        assert!(table.contains(label));
    }
}

#[test]
fn reported_table_fits_the_stats_schema() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/reported_first_iteration_t16.json");
    let stats: DatasetStats = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(stats.n_candidate(), 592_811);
    assert_eq!(stats.n_new(), stats.n_correct() + stats.n_corrected());
    let broken = r#"{"n_candidate": 1, "n_deduplicated": 1, "n_correct": 1, "n_corrected": 1, "n_new": 1}"#;
    assert!(serde_json::from_str::<DatasetStats>(broken).is_err());
}

#[test]
fn finetune_export_is_one_record_per_distinct_pair() {
    let pair = |goal: &str, tac: &str| StateTacticPair {
        pp: tac.into(),
        name: "rewrite".into(),
        goals_before: vec![goal.into()],
        goals_after: vec![],
        error: false,
    };
    let mut entry = IterationEntry {
        iteration: 1,
        ..Default::default()
    };
    entry.pairs = vec![pair("⊢ x = x", "rfl"), pair("⊢ x + 0 = x", "simp"), pair("⊢ y = y", "rfl")];
    let mut ledger = IterationLedger {
        iterations: vec![entry],
        ..Default::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ft.jsonl");
    assert_eq!(export_finetune_data(&ledger, &path).unwrap(), 3);
    let recs: Vec<InstructionRecord> = read_jsonl(&path).unwrap();
    assert!(recs.iter().all(|r| r.prompt.contains("[Current State]:")));
    ledger.iterations[0].pairs.push(pair("⊢ x = x", "rfl"));
    assert_eq!(export_finetune_data(&ledger, &path).unwrap(), 3);
}

#[test]
fn par_map_keeps_input_order() {
    let items: Vec<u64> = (0..100).collect();
    let out = par_map(&items, 7, || Ok::<_, ()>(0u64), |calls, x| {
        *calls += 1;
        x * x
    })
    .unwrap();
    assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.json");
    std::fs::write(&path, r#"{"max_iterations": 1, "search": {"c_puct": 1.0, "bogus": 3}}"#).unwrap();
    let err = PipelineConfig::load(&path).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    std::fs::write(&path, r#"{"suggest": {"t": 8}, "search": {"simulations": 50}}"#).unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!((cfg.suggest.t, cfg.search.simulations_per_decision), (8, 50));
    let mut bad = PipelineConfig::default();
    bad.suggest.t = 0;
    assert!(matches!(bad.check(), Err(PipelineError::Config(_))));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_atgforge")).args(args).output().unwrap()
}

#[test]
fn cli_subcommands_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = cli(&["--out-dir", dir, "extract"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p3s = tmp.path().join("p3s.jsonl");
    let pairs = tmp.path().join("pairs.jsonl");
    assert!(p3s.exists() && pairs.exists());

    let cands = tmp.path().join("cands.jsonl");
    let out = cli(&[
        "--out-dir", dir, "generate", "--p3s", p3s.to_str().unwrap(), "--pairs", pairs.to_str().unwrap(),
        "--out", cands.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = cli(&["--out-dir", dir, "validate", "--in", cands.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats: DatasetStats =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("stats.json")).unwrap()).unwrap();
    assert!(stats.n_new() > 0);

    let out = cli(&["evaluate", "--width", "8"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["rate"].as_f64().unwrap() > 0.0);

    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{\"max_iterations\": \"two\"}").unwrap();
    assert_eq!(cli(&["--config", cfg.to_str().unwrap(), "run"]).status.code(), Some(2));
    let missing = tmp.path().join("lean.json");
    std::fs::write(&missing, r#"{"lean": {"repl_path": "/nonexistent/repl"}}"#).unwrap();
    let code = cli(&["--config", missing.to_str().unwrap(), "--prover", "lean", "--out-dir", dir, "run"]).status.code();
    assert_eq!(code, Some(3));
}

#[test]
fn cli_run_then_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = cli(&["--out-dir", dir, "--seed", "3", "run", "--max-iterations", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli(&["--out-dir", dir, "stats"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("# New (Subtotal)"));
    assert!(tmp.path().join("finetune/instructions.jsonl").exists());
}

#[test]
fn mock_prover_is_a_send_trait_object() {
    let b: Box<dyn Prover + Send> = Box::new(MockProver::default());
    drop(b);
}
