//! Shared oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use atgforge::prover::{Goal, MockProver, Prover, RuleTable};
use atgforge::record::{TacticStep, TheoremRecord};

/// Every tactic the mock grammar admits on `goals` for the given rules:
/// each rewrite in each allowed direction on the target and on every
/// propositional hypothesis, plus simp, rfl and assumption.
pub fn full_vocabulary(rules: &RuleTable, goals: &[String]) -> Vec<TacticStep> {
    let mut out: Vec<String> = Vec::new();
    let rewrites = rules.rewrite_tactics();
    out.extend(rewrites.iter().cloned());
    out.extend(["simp", "rfl", "assumption"].map(String::from));
    if let Some(goal) = goals.first().and_then(|g| Goal::parse(g).ok()) {
        for (h, _) in goal.prop_hyps() {
            out.extend(rewrites.iter().map(|r| format!("{r} at {h}")));
            out.push(format!("simp at {h}"));
        }
    }
    out.iter().map(|t| TacticStep::parse(t)).collect()
}

/// Breadth-first enumeration of distinct goal lists up to `depth` tactics.
/// Returns a shortest proof when one exists.
pub fn exhaustive_proof(theorem: &TheoremRecord, depth: usize) -> Option<Vec<TacticStep>> {
    let mut prover = MockProver::default();
    let rules = prover.rules().clone();
    let init = prover.get_init_state(theorem).ok()?;
    if init.error {
        return None;
    }
    let mut seen: HashSet<Vec<String>> = HashSet::from([init.goals.clone()]);
    let mut queue = VecDeque::from([(init, Vec::new())]);
    while let Some((state, path)) = queue.pop_front() {
        if path.len() >= depth {
            continue;
        }
        for tactic in full_vocabulary(&rules, &state.goals) {
            let next = prover.run_tactic(&state, &tactic).ok()?;
            if next.error || next.used_sorry() {
                continue;
            }
            let mut p: Vec<TacticStep> = path.clone();
            p.push(tactic);
            if next.finished {
                return Some(p);
            }
            if seen.insert(next.goals.clone()) {
                queue.push_back((next, p));
            }
        }
    }
    None
}

use atgforge::corpus::{random_proof, seed_theorems};
use atgforge::extract::extract_corpus;
use atgforge::record::{tactics, Premise};
use atgforge::suggest::RuleSuggester;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rule suggester refreshed on the seed corpus pairs.
pub fn warmed_suggester() -> RuleSuggester {
    let ex = extract_corpus(&seed_theorems(), &mut MockProver::default()).unwrap();
    RuleSuggester::warmed(RuleTable::default(), &ex.pairs)
}

/// Length of the shortest proof prefix that verifies as finished, found by
/// whole-theorem verification of each prefix in turn.
pub fn shortest_finishing_prefix(theorem: &TheoremRecord) -> Option<usize> {
    let mut prover = MockProver::default();
    (1..=theorem.proof.len()).find(|&k| {
        let mut t = theorem.clone();
        t.proof.truncate(k);
        prover.is_correct_and_finished(&t).is_ok_and(|v| v.finished)
    })
}

/// Finishing proofs followed by one to three extra tactics.
pub fn redundant_fixtures(n: usize, seed: u64) -> Vec<TheoremRecord> {
    const EXTRA: [&str; 5] = ["rfl", "simp", "rw [add_zero]", "rw [mul_comm]", "assumption"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=6);
            let mut t = random_proof(&mut rng, len, &format!("red_{i}"));
            for _ in 0..rng.random_range(1..=3) {
                t.proof.push(TacticStep::parse(EXTRA.choose(&mut rng).unwrap()));
            }
            t
        })
        .collect()
}

/// Proofs with their final tactic removed, so one step finishes them: random
/// rewrite chains, seeds of two or more steps, and enumerated proofs of the
/// search corpus.
pub fn missing_step_fixtures(seed: u64) -> Vec<TheoremRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..30 {
        let len = rng.random_range(2..=8);
        out.push(random_proof(&mut rng, len, &format!("miss_{i}")));
    }
    out.extend(seed_theorems().into_iter().filter(|s| s.proof.len() >= 2));
    for g in atgforge::corpus::search_corpus() {
        if let Some(p) = exhaustive_proof(&g, 4).filter(|p| p.len() >= 2) {
            let mut t = g.clone();
            t.proof = p;
            out.push(t);
        }
    }
    for t in &mut out {
        t.proof.pop();
    }
    out
}

/// Records over a small pool of goals, many equal up to the dedup
/// simplifications.
pub fn random_records(n: usize, seed: u64) -> Vec<TheoremRecord> {
    const GOALS: [&str; 12] = [
        "x = y",
        "x + 0 = y",
        "0 + x = y",
        "x * 1 = y",
        "1 * x = y",
        "x - 0 = y",
        "x / 1 = y",
        "x + y = y + x",
        "(x + 0) * 1 = y",
        "x * y = z",
        "x * y * 1 = z",
        "2 * x = x + x",
    ];
    const PROOFS: [&[&str]; 3] = [&["rfl"], &["simp"], &["rw [add_zero]", "rfl"]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut premises = vec![Premise::new("x", "ℕ"), Premise::new("y", "ℕ")];
            if rng.random_bool(0.3) {
                premises.push(Premise::new("z", "ℕ"));
            }
            TheoremRecord::seed(
                &format!("r{i}"),
                premises,
                GOALS.choose(&mut rng).unwrap(),
                tactics(PROOFS.choose(&mut rng).unwrap()),
            )
        })
        .collect()
}
