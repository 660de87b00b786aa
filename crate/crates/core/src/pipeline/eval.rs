//! Pass@1 by best-first search over cumulative tactic log-likelihood.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prover::{ProofState, Prover, ProverError};
use crate::record::{TacticStep, TheoremRecord};
use crate::suggest::TacticSuggester;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub wall_time: Duration,
    pub width: usize,
    pub max_expansions: usize,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub name: String,
    pub proved: bool,
    pub proof: Option<Vec<TacticStep>>,
    pub expansions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rate: f64,
    pub width: usize,
    pub outcomes: Vec<EvalOutcome>,
}

struct Frontier {
    score: f64,
    order: u64,
    state: ProofState,
    path: Vec<TacticStep>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // max-heap: highest likelihood first, then earliest pushed
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.order.cmp(&self.order))
    }
}

/// Best-first search for one theorem. Backend timeouts count as failure.
pub fn prove_best_first<P: Prover + ?Sized>(
    theorem: &TheoremRecord,
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    settings: &EvalSettings,
) -> Result<EvalOutcome, ProverError> {
    let started = Instant::now();
    let mut outcome = EvalOutcome {
        name: theorem.name.clone(),
        proved: false,
        proof: None,
        expansions: 0,
    };
    if settings.wall_time.is_zero() {
        return Ok(outcome);
    }
    let init = match prover.get_init_state(theorem) {
        Err(ProverError::Timeout(_)) => return Ok(outcome),
        other => other?,
    };
    if init.error {
        return Ok(outcome);
    }
    let mut seen: HashSet<Vec<String>> = HashSet::from([init.goals.clone()]);
    let mut heap = BinaryHeap::from([Frontier {
        score: 0.0,
        order: 0,
        state: init,
        path: Vec::new(),
    }]);
    let mut order = 1;
    while let Some(node) = heap.pop() {
        if outcome.expansions >= settings.max_expansions || started.elapsed() >= settings.wall_time {
            break;
        }
        if node.path.len() >= settings.max_depth {
            continue;
        }
        outcome.expansions += 1;
        let Ok(cands) = suggester.suggest(&node.state.goals, settings.width) else {
            continue;
        };
        for c in cands {
            let step = TacticStep::parse(&c.text);
            let next = match prover.run_tactic(&node.state, &step) {
                Err(ProverError::Timeout(_)) => continue,
                other => other?,
            };
            if next.error || next.used_sorry() {
                continue;
            }
            let mut path = node.path.clone();
            path.push(step);
            if next.finished {
                outcome.proved = true;
                outcome.proof = Some(path);
                return Ok(outcome);
            }
            if seen.insert(next.goals.clone()) {
                heap.push(Frontier {
                    score: node.score + c.score,
                    order,
                    state: next,
                    path,
                });
                order += 1;
            }
        }
    }
    Ok(outcome)
}

/// Fraction of `testset` proved, each theorem under its own wall time.
pub fn evaluate_pass1<P: Prover + ?Sized>(
    testset: &[TheoremRecord],
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    settings: &EvalSettings,
) -> Result<EvalReport, ProverError> {
    let mut outcomes = Vec::new();
    for t in testset {
        outcomes.push(prove_best_first(t, prover, suggester, settings)?);
    }
    let proved = outcomes.iter().filter(|o| o.proved).count();
    Ok(EvalReport {
        rate: if testset.is_empty() { 0.0 } else { proved as f64 / testset.len() as f64 },
        width: settings.width,
        outcomes,
    })
}
