//! Proof-tree replay of seed theorems and extraction of partial proof
//! paths (prefixes from the root to intermediate states) and
//! state-tactic pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prover::{ProofState, Prover, ProverError};
use crate::record::{normalize_text, StateTacticPair, TacticStep, TheoremRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeTerminal {
    NoGoals,
    Error,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLayer {
    pub state: ProofState,
    pub incoming_tactic: Option<TacticStep>,
}

/// A replayed proof as a rooted path of states joined by tactic edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofTree {
    pub root: TheoremRecord,
    pub layers: Vec<TreeLayer>,
    pub terminal: TreeTerminal,
}

/// A strict, nonempty prefix of a seed proof and the state it reaches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct P3 {
    pub path_id: String,
    pub root: TheoremRecord,
    pub prefix: Vec<TacticStep>,
    pub tip_state: ProofState,
}

impl P3 {
    /// A search start at the theorem's own initial state (empty prefix),
    /// used when proving statements directly.
    pub fn at_root(root: TheoremRecord, init: ProofState) -> Self {
        Self {
            path_id: format!("{}/root", root.name),
            root,
            prefix: Vec::new(),
            tip_state: init,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("seed `{name}` failed to replay at step {step}: {message}")]
    SeedReplayFailed {
        name: String,
        step: usize,
        message: String,
    },
    #[error("seed `{0}` has no proof to replay")]
    EmptyProof(String),
    #[error(transparent)]
    Prover(#[from] ProverError),
}

/// Replay each tactic in order, recording every intermediate state. The
/// replay stops at the first in-band error with `terminal = Error`.
pub fn build_proof_tree<P: Prover + ?Sized>(theorem: &TheoremRecord, prover: &mut P) -> Result<ProofTree, ExtractError> {
    if theorem.proof.is_empty() {
        return Err(ExtractError::EmptyProof(theorem.name.clone()));
    }
    let init = prover.get_init_state(theorem)?;
    let mut layers = vec![TreeLayer {
        state: init,
        incoming_tactic: None,
    }];
    let mut terminal = TreeTerminal::Open;
    if layers[0].state.error {
        terminal = TreeTerminal::Error;
    }
    for step in &theorem.proof {
        if terminal != TreeTerminal::Open {
            break;
        }
        let prev = &layers.last().expect("root layer").state;
        let next = prover.run_tactic(prev, step)?;
        terminal = if next.error {
            TreeTerminal::Error
        } else if next.finished {
            TreeTerminal::NoGoals
        } else {
            TreeTerminal::Open
        };
        layers.push(TreeLayer {
            state: next,
            incoming_tactic: Some(step.clone()),
        });
    }
    if terminal == TreeTerminal::NoGoals && layers.len() != theorem.proof.len() + 1 {
        // closed before the last tactic: the remaining steps would error
        terminal = TreeTerminal::Error;
    }
    Ok(ProofTree {
        root: theorem.clone(),
        layers,
        terminal,
    })
}

/// Like [`build_proof_tree`] but a tree that does not end in `no goals` is
/// reported as [`ExtractError::SeedReplayFailed`].
pub fn replay_seed<P: Prover + ?Sized>(theorem: &TheoremRecord, prover: &mut P) -> Result<ProofTree, ExtractError> {
    let tree = build_proof_tree(theorem, prover)?;
    if tree.terminal != TreeTerminal::NoGoals {
        let last = tree.layers.last().expect("root layer");
        return Err(ExtractError::SeedReplayFailed {
            name: theorem.name.clone(),
            step: tree.layers.len() - 1,
            message: last
                .state
                .first_error()
                .unwrap_or("proof leaves open goals")
                .to_string(),
        });
    }
    Ok(tree)
}

/// Every root-to-intermediate prefix of a fully proven tree, excluding the
/// empty prefix and the full proof. Trees that did not close yield none.
pub fn extract_p3s(tree: &ProofTree) -> Vec<P3> {
    if tree.terminal != TreeTerminal::NoGoals {
        return Vec::new();
    }
    let n = tree.layers.len() - 1;
    (1..n)
        .map(|len| P3 {
            path_id: format!("{}/p{}", tree.root.name, len),
            root: tree.root.clone(),
            prefix: tree.layers[1..=len]
                .iter()
                .map(|l| l.incoming_tactic.clone().expect("non-root layer has a tactic"))
                .collect(),
            tip_state: tree.layers[len].state.clone(),
        })
        .collect()
}

/// One pair per successfully applied tactic, up to the first failing step.
pub fn extract_state_tactic_pairs(tree: &ProofTree) -> Vec<StateTacticPair> {
    tree.layers
        .windows(2)
        .take_while(|w| !w[1].state.error && !w[0].state.error)
        .map(|w| {
            StateTacticPair::new(
                w[1].incoming_tactic.as_ref().expect("non-root layer has a tactic"),
                w[0].state.goals.clone(),
                w[1].state.goals.clone(),
            )
        })
        .collect()
}

/// Re-run a P3 prefix from the initial state and compare tip goals after
/// normalization.
pub fn replays_to_tip<P: Prover + ?Sized>(p3: &P3, prover: &mut P) -> Result<bool, ProverError> {
    let mut state = prover.get_init_state(&p3.root)?;
    for step in &p3.prefix {
        state = prover.run_tactic(&state, step)?;
    }
    let norm = |goals: &[String]| goals.iter().map(|g| normalize_text(g)).collect::<Vec<_>>();
    Ok(!state.error && norm(&state.goals) == norm(&p3.tip_state.goals))
}

/// Outcome of extracting a whole seed corpus; failing seeds are skipped.
#[derive(Debug, Default, Clone)]
pub struct Extraction {
    pub trees: Vec<ProofTree>,
    pub p3s: Vec<P3>,
    pub pairs: Vec<StateTacticPair>,
    pub skipped: Vec<(String, String)>,
}

pub fn extract_corpus<P: Prover + ?Sized>(seeds: &[TheoremRecord], prover: &mut P) -> Result<Extraction, ProverError> {
    let mut out = Extraction::default();
    for seed in seeds {
        match replay_seed(seed, prover) {
            Ok(tree) => {
                out.p3s.extend(extract_p3s(&tree));
                out.pairs.extend(extract_state_tactic_pairs(&tree));
                out.trees.push(tree);
            }
            Err(ExtractError::Prover(err)) => return Err(err),
            Err(err) => {
                log::warn!("skipping seed: {err}");
                out.skipped.push((seed.name.clone(), err.to_string()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prover::MockProver;
    use crate::record::{tactics, Premise};

    fn seed(goal: &str, proof: &[&str]) -> TheoremRecord {
        TheoremRecord::seed("s", vec![Premise::new("x", "ℕ")], goal, tactics(proof))
    }

    #[test]
    fn two_step_fixture() {
        let tree = build_proof_tree(&seed("x + 0 = x", &["rw [add_zero]", "rfl"]), &mut MockProver::default()).unwrap();
        assert_eq!(tree.layers.len(), 3);
        assert_eq!(tree.terminal, TreeTerminal::NoGoals);
        assert!(tree.layers[0].incoming_tactic.is_none());
        let pairs = extract_state_tactic_pairs(&tree);
        assert_eq!(pairs.len(), 2);
        assert!(pairs[1].goals_after.is_empty());
        assert_eq!(pairs[0].pp, "rw [add_zero]");
        assert_eq!(extract_p3s(&tree).len(), 1);
    }

    #[test]
    fn error_at_second_step() {
        let s = seed("x + 0 = x", &["rw [add_zero]", "rw [bogus]", "rfl"]);
        let tree = build_proof_tree(&s, &mut MockProver::default()).unwrap();
        assert_eq!(tree.terminal, TreeTerminal::Error);
        assert_eq!(tree.layers.len(), 3);
        assert!(tree.layers[2].state.error);
        assert_eq!(extract_state_tactic_pairs(&tree).len(), 1);
        assert!(extract_p3s(&tree).is_empty());
        match replay_seed(&s, &mut MockProver::default()) {
            Err(ExtractError::SeedReplayFailed { step, .. }) => assert_eq!(step, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_tactic_proof_has_no_p3() {
        let tree = build_proof_tree(&seed("x = x", &["rfl"]), &mut MockProver::default()).unwrap();
        assert_eq!(tree.layers.len(), 2);
        assert!(extract_p3s(&tree).is_empty());
    }

    #[test]
    fn early_close_is_not_no_goals() {
        let tree = build_proof_tree(&seed("x = x", &["rfl", "rfl"]), &mut MockProver::default()).unwrap();
        assert_eq!(tree.terminal, TreeTerminal::Error);
    }

    #[test]
    fn corpus_extraction_skips_bad_seeds() {
        let seeds = vec![seed("x + 0 = x", &["rw [add_zero]", "rfl"]), seed("x + 0 = x", &["rfl"])];
        let out = extract_corpus(&seeds, &mut MockProver::default()).unwrap();
        assert_eq!(out.trees.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.p3s.len(), 1);
        assert!(replays_to_tip(&out.p3s[0], &mut MockProver::default()).unwrap());
    }
}
