//! Hypothesis injection: a candidate path becomes a theorem whose premise
//! is the root goal, rewritten by the path's tactics until it matches the
//! leaf goal.

use thiserror::Error;

use crate::record::{goal_target, Premise, Provenance, RecordSource, TacticKind, TacticStep, TheoremRecord};
use crate::search::{CandidatePath, FoundProof};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("path `{path_id}` has no at-hypothesis form for `{tactic}`")]
    NonTransformablePath { path_id: String, tactic: String },
    #[error("path `{0}` has no predicted tactics")]
    EmptyPrediction(String),
    #[error("path `{0}` has no leaf goal")]
    NoLeafGoal(String),
}

/// Rewrites and simp calls on the main goal have an `at h` form. Tactics
/// that already target a hypothesis do not.
pub fn transformable(tactic: &TacticStep) -> bool {
    matches!(tactic.kind(), TacticKind::Rewrite | TacticKind::Simp) && !targets_hypothesis(tactic.text())
}

fn targets_hypothesis(text: &str) -> bool {
    let tail = text.rsplit(']').next().unwrap_or(text);
    tail.split_whitespace().any(|w| w == "at")
}

fn at_form(tactic: &TacticStep, hyp: &str) -> TacticStep {
    TacticStep::parse(&format!("{} at {hyp}", tactic.text()))
}

/// `h`, then `h✝1`, `h✝2`, … until the name is unused.
pub fn fresh_hypothesis_name(premises: &[Premise]) -> String {
    let taken = |n: &str| premises.iter().any(|p| p.name == n);
    if !taken("h") {
        return "h".to_string();
    }
    (1..)
        .map(|i| format!("h✝{i}"))
        .find(|n| !taken(n))
        .expect("unbounded range")
}

pub fn make_candidate_theorem(root: &TheoremRecord, cp: &CandidatePath, name: &str) -> Result<TheoremRecord, SynthError> {
    if cp.predicted.is_empty() {
        return Err(SynthError::EmptyPrediction(cp.path_id.clone()));
    }
    let leaf = cp
        .leaf_goals
        .first()
        .ok_or_else(|| SynthError::NoLeafGoal(cp.path_id.clone()))?;
    let path: Vec<&TacticStep> = cp.prefix_from_p3.iter().chain(&cp.predicted).collect();
    if let Some(bad) = path.iter().find(|t| !transformable(t)) {
        return Err(SynthError::NonTransformablePath {
            path_id: cp.path_id.clone(),
            tactic: bad.text().to_string(),
        });
    }
    let hyp = fresh_hypothesis_name(&root.premises);
    let mut premises = root.premises.clone();
    premises.push(Premise::new(hyp.clone(), root.goal.clone()));
    let mut proof: Vec<TacticStep> = path.iter().map(|t| at_form(t, &hyp)).collect();
    proof.push(TacticStep::parse("assumption"));
    Ok(TheoremRecord {
        name: name.to_string(),
        imports: root.imports.clone(),
        premises,
        goal: goal_target(leaf).to_string(),
        proof,
        source: RecordSource::Generated,
        provenance: Some(Provenance {
            root_name: root.name.clone(),
            path_id: cp.path_id.clone(),
            prediction_steps: cp.predicted.len(),
        }),
    })
}

/// A new proof of the root statement found by search.
pub fn proof_record(root: &TheoremRecord, found: &FoundProof, path_id: &str, name: &str) -> TheoremRecord {
    TheoremRecord {
        name: name.to_string(),
        imports: root.imports.clone(),
        premises: root.premises.clone(),
        goal: root.goal.clone(),
        proof: found.tactics.clone(),
        source: RecordSource::Generated,
        provenance: Some(Provenance {
            root_name: root.name.clone(),
            path_id: path_id.to_string(),
            prediction_steps: found.predicted,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prover::{MockProver, Prover};
    use crate::record::tactics;

    fn cp(prefix: &[&str], predicted: &[&str], leaf: &str) -> CandidatePath {
        CandidatePath {
            path_id: "r/p1/c0".into(),
            prefix_from_p3: tactics(prefix),
            predicted: tactics(predicted),
            leaf_goals: vec![leaf.into()],
        }
    }

    #[test]
    fn transformable_kinds() {
        assert!(transformable(&TacticStep::parse("rw [mul_sum]")));
        assert!(transformable(&TacticStep::parse("simp")));
        assert!(!transformable(&TacticStep::parse("assumption")));
        assert!(!transformable(&TacticStep::parse("rfl")));
        assert!(!transformable(&TacticStep::parse("rw [add_zero] at h0")));
    }

    #[test]
    fn add_zero_example() {
        let root = TheoremRecord::seed("r", vec![Premise::new("x", "ℕ")], "x + 0 = x", vec![]);
        let t = make_candidate_theorem(&root, &cp(&[], &["rw [add_zero]"], "x : ℕ\n⊢ x = x"), "c").unwrap();
        assert_eq!(t.premises.last().unwrap(), &Premise::new("h", "x + 0 = x"));
        assert_eq!(t.goal, "x = x");
        let texts: Vec<&str> = t.proof.iter().map(|s| s.text()).collect();
        assert_eq!(texts, ["rw [add_zero] at h", "assumption"]);
        let v = MockProver::default().is_correct_and_finished(&t).unwrap();
        assert!(v.finished);
        assert_eq!(t.prediction_steps(), 1);
        t.check_invariants().unwrap();
    }

    #[test]
    fn freshening() {
        let ps = vec![Premise::new("h", "ℕ"), Premise::new("h✝1", "ℕ")];
        assert_eq!(fresh_hypothesis_name(&ps), "h✝2");
        assert_eq!(fresh_hypothesis_name(&[]), "h");
    }

    #[test]
    fn rejects_untransformable_paths() {
        let root = TheoremRecord::seed("r", vec![], "x + 0 = x", vec![]);
        let err = make_candidate_theorem(&root, &cp(&["rfl"], &["rw [add_zero]"], "⊢ x = x"), "c").unwrap_err();
        assert!(matches!(err, SynthError::NonTransformablePath { .. }));
    }
}
