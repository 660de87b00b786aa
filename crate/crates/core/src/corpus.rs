//! Built-in mock corpora: seed theorems, the search corpus, the evaluation
//! testset, and a generator of random replayable proofs.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::expr::{parse_expr, BinOp, Expr};
use crate::prover::{MockProver, Prover, RuleTable};
use crate::record::{tactics, Premise, TacticStep, TheoremRecord};

fn nat(names: &[&str]) -> Vec<Premise> {
    names.iter().map(|n| Premise::new(*n, "ℕ")).collect()
}

fn with_f(names: &[&str]) -> Vec<Premise> {
    let mut out = nat(names);
    out.push(Premise::new("f", "ℕ → ℕ"));
    out
}

/// The mock analogue of the running sum identity: factor the constant into
/// the right-hand sum, shift the left-hand index, simplify.
pub fn sum_mul_congr() -> TheoremRecord {
    TheoremRecord::seed(
        "sum_mul_congr",
        with_f(&["n"]),
        "∑ k in Ico 1 (n + 1), n * f (k - 1) = n * ∑ l in range n, f l",
        tactics(&["rw [mul_sum]", "rw [sum_shift]", "simp"]),
    )
}

const LONG_VARS: [&str; 11] = ["a", "b", "c", "d", "e", "g", "i", "j", "m", "p", "q"];

/// A 23-tactic seed: eleven `(v + 0) * 1` terms cleaned one rewrite at a
/// time, then `rfl`.
pub fn long_identity() -> TheoremRecord {
    let lhs: Vec<String> = LONG_VARS.iter().map(|v| format!("({v} + 0) * 1")).collect();
    let goal = format!("{} = {}", lhs.join(" + "), LONG_VARS.join(" + "));
    let mut proof = vec![TacticStep::parse("rw [add_zero]"); LONG_VARS.len()];
    proof.extend(vec![TacticStep::parse("rw [mul_one]"); LONG_VARS.len()]);
    proof.push(TacticStep::parse("rfl"));
    TheoremRecord::seed("idt_long", nat(&LONG_VARS), &goal, proof)
}

/// Ten seed theorems with known-good mock proofs.
pub fn seed_theorems() -> Vec<TheoremRecord> {
    let xyz = || nat(&["x", "y", "z"]);
    vec![
        sum_mul_congr(),
        long_identity(),
        TheoremRecord::seed("add_zero_id", xyz(), "x + 0 = x", tactics(&["rw [add_zero]", "rfl"])),
        TheoremRecord::seed("add_comm_id", xyz(), "x + y = y + x", tactics(&["rw [add_comm]", "rfl"])),
        TheoremRecord::seed("two_mul_id", xyz(), "2 * x = x + x", tactics(&["rw [two_mul]", "rfl"])),
        TheoremRecord::seed(
            "sub_example",
            nat(&["n"]),
            "2 * n + 1 - n = n + 1",
            tactics(&["rw [two_mul]", "rw [add_assoc]", "rw [add_comm]", "simp"]),
        ),
        TheoremRecord::seed(
            "mul_add_id",
            xyz(),
            "x * (y + z) = x * y + x * z",
            tactics(&["rw [mul_add]", "rfl"]),
        ),
        TheoremRecord::seed(
            "add_assoc_id",
            xyz(),
            "x + y + z = x + (y + z)",
            tactics(&["rw [add_assoc]", "rfl"]),
        ),
        TheoremRecord::seed(
            "mul_sum_id",
            with_f(&["c", "n"]),
            "c * ∑ k in range n, f k = ∑ k in range n, c * f k",
            tactics(&["rw [mul_sum]", "rfl"]),
        ),
        TheoremRecord::seed("mul_one_id", xyz(), "x * 1 = x", tactics(&["simp"])),
    ]
}

/// Twenty statement-only goals for search-versus-enumeration checks: a mix
/// of identities a few rewrites deep and false statements.
pub fn search_corpus() -> Vec<TheoremRecord> {
    const GOALS: [&str; 20] = [
        "x + 0 = x",
        "x * (y + z) = z * x + y * x",
        "x + y = y + x",
        "x * y = y * x",
        "x + y + z = x + (y + z)",
        "2 * x = x + x",
        "x * 2 = x + x",
        "x * (y + z) = x * y + x * z",
        "(x + y) * z = x * z + y * z",
        "x + y + 0 = y + x",
        "x * (y * z) = x * y * z",
        "2 * x + 1 - x = x + 1",
        "(x + y) * 2 = y * 2 + x * 2",
        "c * ∑ k in range n, f k = ∑ k in range n, c * f k",
        "x + 1 = x",
        "x + y = x",
        "x * y = x + y",
        "2 + 2 = 5",
        "x * 0 = x",
        "x + x = x",
    ];
    GOALS
        .iter()
        .enumerate()
        .map(|(i, g)| TheoremRecord::seed(&format!("goal_{i:02}"), with_f(&["x", "y", "z", "c", "n"]), g, vec![]))
        .collect()
}

/// Ten statement-only goals for Pass@1 evaluation.
pub fn eval_testset() -> Vec<TheoremRecord> {
    const GOALS: [&str; 10] = [
        "y + 0 = y",
        "1 * y = y",
        "y + x = x + y",
        "2 * y = y + y",
        "y * (x + z) = y * x + y * z",
        "(y + z) + x = y + (z + x)",
        "y * 1 + 0 = y",
        "y * x = x * y + 0",
        "y + 2 = y",
        "y * y = y + y + 1",
    ];
    GOALS
        .iter()
        .enumerate()
        .map(|(i, g)| TheoremRecord::seed(&format!("test_{i:02}"), nat(&["x", "y", "z"]), g, vec![]))
        .collect()
}

fn random_expr(rng: &mut impl Rng, depth: usize) -> Expr {
    const VARS: [&str; 3] = ["x", "y", "z"];
    if depth == 0 || rng.random_bool(0.3) {
        return if rng.random_bool(0.7) {
            Expr::Var(VARS.choose(rng).expect("nonempty").to_string())
        } else {
            Expr::Num(rng.random_range(0..3))
        };
    }
    let op = if rng.random_bool(0.5) { BinOp::Add } else { BinOp::Mul };
    Expr::Bin(op, Box::new(random_expr(rng, depth - 1)), Box::new(random_expr(rng, depth - 1)))
}

/// A seed theorem `e = e'` whose proof is `len − 1` forward rewrites taking
/// `e` to `e'`, then `rfl`. Every proof replays to no goals.
pub fn random_proof(rng: &mut impl Rng, len: usize, name: &str) -> TheoremRecord {
    assert!(len >= 1, "proofs have at least one tactic");
    let rules = RuleTable::default();
    let mut prover = MockProver::new(rules.clone());
    let vocab: Vec<String> = rules
        .rewrite_tactics()
        .into_iter()
        .filter(|t| !t.contains("sum"))
        .collect();
    loop {
        let start = random_expr(rng, 3);
        // the right side is a fresh variable no rule matches
        let probe = TheoremRecord::seed(name, nat(&["x", "y", "z", "w"]), &format!("{start} = w"), vec![]);
        let mut state = prover.get_init_state(&probe).expect("mock never faults");
        let mut proof = Vec::new();
        let mut stuck = false;
        while proof.len() + 1 < len {
            let mut options: Vec<(TacticStep, _)> = Vec::new();
            for t in &vocab {
                let step = TacticStep::parse(t);
                let next = prover.run_tactic(&state, &step).expect("mock never faults");
                let small = next
                    .goals
                    .first()
                    .and_then(|g| parse_expr(crate::record::goal_target(g).split(" = ").next()?).ok())
                    .is_some_and(|e| e.size() <= 40);
                if !next.error && small {
                    options.push((step, next));
                }
            }
            let Some((step, next)) = options.choose(rng).cloned() else {
                stuck = true;
                break;
            };
            proof.push(step);
            state = next;
        }
        if stuck {
            continue;
        }
        let lhs = crate::record::goal_target(&state.goals[0])
            .rsplit_once(" = w")
            .map(|(l, _)| l.to_string())
            .expect("rhs untouched");
        proof.push(TacticStep::parse("rfl"));
        let thm = TheoremRecord::seed(name, nat(&["x", "y", "z"]), &format!("{start} = {lhs}"), proof);
        if prover.is_correct_and_finished(&thm).is_ok_and(|v| v.finished) {
            return thm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn seeds_replay() {
        let mut p = MockProver::default();
        let seeds = seed_theorems();
        assert_eq!(seeds.len(), 10);
        for s in &seeds {
            let v = p.is_correct_and_finished(s).unwrap();
            assert!(v.finished, "{} failed: {v:?}", s.name);
        }
        assert_eq!(long_identity().proof.len(), 23);
        assert_eq!(sum_mul_congr().proof.len(), 3);
    }

    #[test]
    fn random_proofs_replay() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for len in [1, 2, 7, 15] {
            let t = random_proof(&mut rng, len, "r");
            assert_eq!(t.proof.len(), len);
        }
    }
}
