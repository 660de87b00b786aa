//! Deterministic term-rewriting prover.
//!
//! States carry their goals as pretty-printed text; every tactic re-parses
//! the text, so the prover is a pure function of `(goals, tactic)`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Duration;

use super::goal::{Goal, Hyp, HypKind};
use super::rules::RuleTable;
use super::{replay_verification, Message, ProofState, Prover, ProverError, Verification, SORRY_WARNING};
use crate::expr::{alpha_eq, parse_prop, rewrite_prop_first, BinOp, Expr, Prop};
use crate::record::{TacticKind, TacticStep, TheoremRecord};

const SESSION: &str = "mock";
pub const SIMP_STEP_CAP: usize = 100;
const NEG_TYPES: &[&str] = &["ℤ", "ℚ", "ℝ", "ℂ", "R", "Int", "Real", "Rat"];

/// Parsed form of the tactic grammar the mock backend accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TacticCommand {
    Rewrite {
        rules: Vec<(String, bool)>,
        at: Option<String>,
    },
    Simp {
        at: Option<String>,
    },
    Rfl,
    Assumption,
    Sorry,
    Have {
        name: String,
        prop: Prop,
        inline: Option<Box<TacticCommand>>,
    },
}

impl TacticCommand {
    pub fn parse(text: &str) -> Result<TacticCommand, String> {
        let text = text.trim();
        let (head, rest) = match text.find(|c: char| c.is_whitespace() || c == '[') {
            Some(idx) => (&text[..idx], text[idx..].trim()),
            None => (text, ""),
        };
        let at_clause = |rest: &str| -> Result<Option<String>, String> {
            if rest.is_empty() {
                return Ok(None);
            }
            let hyp = rest
                .strip_prefix("at ")
                .map(str::trim)
                .filter(|h| !h.is_empty() && !h.contains(char::is_whitespace))
                .ok_or_else(|| format!("unexpected syntax `{rest}`"))?;
            Ok(Some(hyp.to_string()))
        };
        match head {
            "rw" | "rewrite" => {
                let open = rest.strip_prefix('[').ok_or("expected `[` after rw")?;
                let close = open.find(']').ok_or("expected `]`")?;
                let mut rules = Vec::new();
                for item in open[..close].split(',') {
                    let item = item.trim();
                    let (name, rev) = match item.strip_prefix('←').or_else(|| item.strip_prefix("<-")) {
                        Some(n) => (n.trim(), true),
                        None => (item, false),
                    };
                    if name.is_empty() || name.contains(char::is_whitespace) {
                        return Err(format!("malformed rewrite rule `{item}`"));
                    }
                    rules.push((name.to_string(), rev));
                }
                Ok(TacticCommand::Rewrite {
                    rules,
                    at: at_clause(open[close + 1..].trim())?,
                })
            }
            "simp" => Ok(TacticCommand::Simp { at: at_clause(rest)? }),
            "rfl" if rest.is_empty() => Ok(TacticCommand::Rfl),
            "assumption" if rest.is_empty() => Ok(TacticCommand::Assumption),
            "sorry" if rest.is_empty() => Ok(TacticCommand::Sorry),
            "have" => Self::parse_have(rest),
            _ => Err(format!("unknown tactic `{text}`")),
        }
    }

    fn parse_have(rest: &str) -> Result<TacticCommand, String> {
        let (decl, proof) = match rest.find(":=") {
            Some(idx) => (rest[..idx].trim(), Some(rest[idx + 2..].trim())),
            None => (rest.trim(), None),
        };
        let (name, prop_text) = match decl.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => return Err("malformed have: expected `have name : prop`".into()),
        };
        let name = if name.is_empty() { "this" } else { name };
        if name.contains(char::is_whitespace) || prop_text.is_empty() {
            return Err("malformed have".into());
        }
        let prop = parse_prop(prop_text).map_err(|e| format!("malformed have: {e}"))?;
        let inline = match proof {
            None => None,
            Some(p) => {
                let tac = p.strip_prefix("by ").unwrap_or(p).trim();
                if tac.is_empty() {
                    return Err("malformed have: empty proof".into());
                }
                Some(Box::new(TacticCommand::parse(tac)?))
            }
        };
        Ok(TacticCommand::Have {
            name: name.to_string(),
            prop,
            inline,
        })
    }
}

/// The mock backend. Cloning is cheap; clones share the rule table.
#[derive(Debug, Clone)]
pub struct MockProver {
    rules: Arc<RuleTable>,
    check_budget: Duration,
}

impl Default for MockProver {
    fn default() -> Self {
        Self::new(RuleTable::default())
    }
}

fn state_id(goal_text: &str) -> i64 {
    let mut h = DefaultHasher::new();
    goal_text.hash(&mut h);
    (h.finish() & 0x7fff_ffff) as i64
}

fn live(goals: Vec<Goal>, messages: Vec<Message>) -> ProofState {
    let texts: Vec<String> = goals.iter().map(|g| g.to_string()).collect();
    let ids = texts.iter().map(|t| state_id(t)).collect();
    ProofState::live(SESSION, ids, texts, messages)
}

fn err_state(why: impl Into<String>) -> ProofState {
    ProofState::errored(SESSION, Vec::new(), Vec::new(), why)
}

/// Elaboration check: coercion markers never elaborate, and negation needs
/// an enclosing ascription to a type with negatives.
pub fn elaboration_error(e: &Expr) -> Option<String> {
    fn go(e: &Expr, signed: bool) -> Option<String> {
        match e {
            Expr::Coe(inner) => Some(format!(
                "typeclass instance problem is stuck, it is often due to metavariables: {}",
                Expr::Coe(inner.clone())
            )),
            Expr::Neg(_) if !signed => Some("failed to synthesize Neg ℕ".to_string()),
            Expr::Ascribe(inner, ty) => go(inner, NEG_TYPES.contains(&ty.as_str())),
            _ => e.children().into_iter().find_map(|c| go(c, signed)),
        }
    }
    go(e, false)
}

fn prop_elaboration_error(p: &Prop) -> Option<String> {
    elaboration_error(&p.lhs).or_else(|| elaboration_error(&p.rhs))
}

fn fold_literals(e: &Expr) -> Option<Expr> {
    if let Expr::Bin(op, l, r) = e {
        if let (Expr::Num(_), Expr::Num(_)) = (&**l, &**r) {
            if *op == BinOp::Div && **r == Expr::Num(0) {
                return None;
            }
            let v = e.eval_ground()?;
            return u64::try_from(v).ok().map(Expr::Num);
        }
    }
    None
}

enum SimpOutcome {
    Closed,
    False,
    Rewritten(Prop),
    NoProgress,
}

impl MockProver {
    pub fn new(rules: RuleTable) -> Self {
        Self {
            rules: Arc::new(rules),
            check_budget: Duration::from_secs(160),
        }
    }

    pub fn with_check_budget(mut self, budget: Duration) -> Self {
        self.check_budget = budget;
        self
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    /// The initial goal of a theorem, or the elaboration error.
    pub fn initial_goal(theorem: &TheoremRecord) -> Result<Goal, String> {
        let mut hyps = Vec::new();
        for premise in &theorem.premises {
            let hyp = Hyp::from_premise(&premise.name, &premise.type_expr)
                .map_err(|e| format!("premise `{}`: {e}", premise.name))?;
            if let Some(p) = hyp.prop() {
                if let Some(msg) = prop_elaboration_error(p) {
                    return Err(msg);
                }
            }
            hyps.push(hyp);
        }
        let target = parse_prop(&theorem.goal).map_err(|e| format!("goal: {e}"))?;
        if let Some(msg) = prop_elaboration_error(&target) {
            return Err(msg);
        }
        Ok(Goal { hyps, target })
    }

    fn rewrite_prop(&self, prop: &Prop, rules: &[(String, bool)]) -> Result<Prop, String> {
        let mut current = prop.clone();
        for (name, reverse) in rules {
            let rule = self
                .rules
                .get(name)
                .ok_or_else(|| format!("unknown identifier '{name}'"))?;
            current = rewrite_prop_first(&current, &|e| rule.apply_at(e, *reverse)).ok_or_else(|| {
                format!("tactic 'rewrite' failed, did not find instance of the pattern '{name}' in the target expression")
            })?;
        }
        Ok(current)
    }

    /// Exhaustive directed rewriting with literal folding, capped.
    fn simp_normalize(&self, prop: &Prop) -> Prop {
        let step = |e: &Expr| -> Option<Expr> {
            fold_literals(e).or_else(|| self.rules.simp_rules().find_map(|r| r.apply_at(e, false)))
        };
        let mut current = prop.clone();
        for _ in 0..SIMP_STEP_CAP {
            match rewrite_prop_first(&current, &step) {
                Some(next) => current = next,
                None => break,
            }
        }
        current
    }

    fn simp_prop(&self, prop: &Prop) -> SimpOutcome {
        let normal = self.simp_normalize(prop);
        if normal.rel.reflexive() && alpha_eq(&normal.lhs, &normal.rhs) {
            return SimpOutcome::Closed;
        }
        match normal.eval_ground() {
            Some(true) => return SimpOutcome::Closed,
            Some(false) => return SimpOutcome::False,
            None => {}
        }
        if normal == *prop {
            SimpOutcome::NoProgress
        } else {
            SimpOutcome::Rewritten(normal)
        }
    }

    /// Apply a parsed command to the first goal, producing replacement goals.
    fn apply(&self, goal: &Goal, cmd: &TacticCommand, messages: &mut Vec<Message>) -> Result<Vec<Goal>, String> {
        match cmd {
            TacticCommand::Rewrite { rules, at: None } => {
                let target = self.rewrite_prop(&goal.target, rules)?;
                Ok(vec![Goal {
                    hyps: goal.hyps.clone(),
                    target,
                }])
            }
            TacticCommand::Rewrite { rules, at: Some(h) } => {
                let mut out = goal.clone();
                let hyp = out.hyp_mut(h).ok_or_else(|| format!("unknown hypothesis '{h}'"))?;
                let HypKind::Prop(p) = &hyp.kind else {
                    return Err(format!("hypothesis '{h}' is not a proposition"));
                };
                hyp.kind = HypKind::Prop(self.rewrite_prop(p, rules)?);
                Ok(vec![out])
            }
            TacticCommand::Simp { at: None } => match self.simp_prop(&goal.target) {
                SimpOutcome::Closed => Ok(vec![]),
                SimpOutcome::False => Err("simp reduced the goal to False".into()),
                SimpOutcome::NoProgress => Err("simp made no progress".into()),
                SimpOutcome::Rewritten(target) => Ok(vec![Goal {
                    hyps: goal.hyps.clone(),
                    target,
                }]),
            },
            TacticCommand::Simp { at: Some(h) } => {
                let p = goal
                    .hyp(h)
                    .ok_or_else(|| format!("unknown hypothesis '{h}'"))?
                    .prop()
                    .ok_or_else(|| format!("hypothesis '{h}' is not a proposition"))?
                    .clone();
                let mut out = goal.clone();
                match self.simp_prop(&p) {
                    SimpOutcome::False => Ok(vec![]),
                    SimpOutcome::NoProgress => Err("simp made no progress".into()),
                    SimpOutcome::Closed => {
                        let idx = out.hyps.iter().rposition(|x| x.name == *h).expect("hyp present");
                        out.hyps.remove(idx);
                        Ok(vec![out])
                    }
                    SimpOutcome::Rewritten(np) => {
                        out.hyp_mut(h).expect("hyp present").kind = HypKind::Prop(np);
                        Ok(vec![out])
                    }
                }
            }
            TacticCommand::Rfl => {
                let t = &goal.target;
                if t.rel.reflexive() && alpha_eq(&t.lhs, &t.rhs) {
                    Ok(vec![])
                } else {
                    Err("The rfl tactic failed".into())
                }
            }
            TacticCommand::Assumption => {
                if goal.prop_hyps().any(|(_, p)| p.alpha_eq(&goal.target)) {
                    Ok(vec![])
                } else {
                    Err("tactic 'assumption' failed".into())
                }
            }
            TacticCommand::Sorry => {
                messages.push(Message::warning(SORRY_WARNING));
                Ok(vec![])
            }
            TacticCommand::Have { name, prop, inline } => {
                if let Some(msg) = prop_elaboration_error(prop) {
                    return Err(msg);
                }
                let mut with_hyp = goal.clone();
                with_hyp.hyps.push(Hyp {
                    name: name.clone(),
                    kind: HypKind::Prop(prop.clone()),
                });
                let side = Goal {
                    hyps: goal.hyps.clone(),
                    target: prop.clone(),
                };
                match inline {
                    None => Ok(vec![side, with_hyp]),
                    Some(cmd) => {
                        let rest = self.apply(&side, cmd, messages)?;
                        if rest.is_empty() {
                            Ok(vec![with_hyp])
                        } else {
                            Err("unsolved goals in have proof".into())
                        }
                    }
                }
            }
        }
    }

    fn step(&self, state: &ProofState, tactic: &TacticStep) -> ProofState {
        if state.error {
            return err_state("previous state is an error");
        }
        let Some(first) = state.goals.first() else {
            return err_state("no goals to be proved");
        };
        let cmd = match TacticCommand::parse(tactic.text()) {
            Ok(cmd) => cmd,
            Err(msg) => return err_state(msg),
        };
        let goal = match Goal::parse(first) {
            Ok(g) => g,
            Err(e) => return err_state(format!("cannot read goal: {e}")),
        };
        let mut messages = Vec::new();
        match self.apply(&goal, &cmd, &mut messages) {
            Ok(mut goals) => {
                for rest in &state.goals[1..] {
                    match Goal::parse(rest) {
                        Ok(g) => goals.push(g),
                        Err(e) => return err_state(format!("cannot read goal: {e}")),
                    }
                }
                live(goals, messages)
            }
            Err(msg) => ProofState::errored(SESSION, Vec::new(), messages, msg),
        }
    }
}

impl Prover for MockProver {
    fn get_init_state(&mut self, theorem: &TheoremRecord) -> Result<ProofState, ProverError> {
        Ok(match Self::initial_goal(theorem) {
            Ok(goal) => live(vec![goal], Vec::new()),
            Err(msg) => err_state(msg),
        })
    }

    fn run_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError> {
        Ok(self.step(state, tactic))
    }

    fn run_have_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError> {
        if tactic.kind() != TacticKind::Have {
            return Ok(err_state(format!("expected a have tactic, got `{tactic}`")));
        }
        Ok(self.step(state, tactic))
    }

    fn is_correct_and_finished(&mut self, theorem: &TheoremRecord) -> Result<Verification, ProverError> {
        let budget = self.check_budget;
        replay_verification(self, theorem, budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{tactics, Premise};

    fn thm(goal: &str, proof: &[&str]) -> TheoremRecord {
        TheoremRecord::seed("t", vec![Premise::new("x", "ℕ")], goal, tactics(proof))
    }

    fn run(state: &ProofState, tac: &str) -> ProofState {
        MockProver::default().run_tactic(state, &TacticStep::parse(tac)).unwrap()
    }

    fn target(state: &ProofState) -> &str {
        crate::record::goal_target(&state.goals[0])
    }

    #[test]
    fn init_state_has_one_goal() {
        let s = MockProver::default().get_init_state(&thm("x + 0 = x", &[])).unwrap();
        assert!(!s.error && !s.finished);
        assert_eq!(s.goals.len(), 1);
        assert_eq!(target(&s), "x + 0 = x");
        assert!(s.check_invariants());
    }

    #[test]
    fn unbalanced_statement_is_error_state() {
        let s = MockProver::default().get_init_state(&thm("(x + 0 = x", &[])).unwrap();
        assert!(s.error);
        assert!(s.check_invariants());
    }

    #[test]
    fn rewrite_then_rfl() {
        let s0 = MockProver::default().get_init_state(&thm("x + 0 = x", &[])).unwrap();
        let s1 = run(&s0, "rw [add_zero]");
        assert_eq!(target(&s1), "x = x");
        assert!(!s1.finished);
        let s2 = run(&s1, "rfl");
        assert!(s2.finished && s2.goals.is_empty() && !s2.error);
    }

    #[test]
    fn error_absorption() {
        let bad = err_state("boom");
        for tac in ["rfl", "simp", "rw [add_zero]", "have h : x = x"] {
            assert!(run(&bad, tac).error);
        }
    }

    #[test]
    fn unknown_rule_and_unknown_tactic() {
        let s0 = MockProver::default().get_init_state(&thm("x + 0 = x", &[])).unwrap();
        let s = run(&s0, "rw [no_such_rule]");
        assert!(s.error);
        assert!(s.first_error().unwrap().contains("unknown identifier"));
        assert!(run(&s0, "linarith").error);
    }

    #[test]
    fn have_opens_side_goal_first() {
        let s0 = MockProver::default().get_init_state(&thm("x + 0 = x", &[])).unwrap();
        let s1 = MockProver::default()
            .run_have_tactic(&s0, &TacticStep::parse("have h1 : x = x"))
            .unwrap();
        assert_eq!(s1.goals.len(), 2);
        assert_eq!(target(&s1), "x = x");
        assert!(s1.goals[1].contains("h1 : x = x"));
        assert!(run(&s0, "have := x").error);
        let inline = run(&s0, "have h : x = x := rfl");
        assert_eq!(inline.goals.len(), 1);
        assert!(inline.goals[0].contains("h : x = x"));
        let not_have = MockProver::default().run_have_tactic(&s0, &TacticStep::parse("rfl")).unwrap();
        assert!(not_have.error);
    }

    #[test]
    fn simp_normalizes_and_closes() {
        let s0 = MockProver::default()
            .get_init_state(&thm("(x + 0) * 1 = 0 + x", &[]))
            .unwrap();
        assert!(run(&s0, "simp").finished);
        let s0 = MockProver::default().get_init_state(&thm("2 + 2 = 5", &[])).unwrap();
        assert!(run(&s0, "simp").error);
        let s0 = MockProver::default().get_init_state(&thm("x + y = y + x", &[])).unwrap();
        assert_eq!(run(&s0, "simp").first_error(), Some("simp made no progress"));
    }

    #[test]
    fn rewriting_hypotheses_and_assumption() {
        let mut t = thm("x = x", &[]);
        t.premises.push(Premise::new("h", "x + 0 = x"));
        let s0 = MockProver::default().get_init_state(&t).unwrap();
        assert!(run(&s0, "assumption").error);
        let s1 = run(&s0, "rw [add_zero] at h");
        assert!(s1.goals[0].contains("h : x = x"));
        assert!(run(&s1, "assumption").finished);
        assert!(run(&s0, "rw [add_zero] at nope").error);
    }

    #[test]
    fn verification_examples() {
        let mut p = MockProver::default();
        let v = p.is_correct_and_finished(&thm("x + 0 = x", &["rw [add_zero]", "rfl"])).unwrap();
        assert!(v.correct && v.finished);
        let v = p.is_correct_and_finished(&thm("x + 0 = x", &["sorry"])).unwrap();
        assert!(v.correct && !v.finished);
        assert!(v.messages.iter().any(|m| m.text.contains("declaration uses 'sorry'")));
        let v = p.is_correct_and_finished(&thm("x + 0 = x", &["rw [bogus]"])).unwrap();
        assert!(!v.correct && !v.finished);
        assert!(v.messages.iter().any(|m| m.severity == super::super::Severity::Error));
    }

    #[test]
    fn type_errors_surface_at_init() {
        let s = MockProver::default()
            .get_init_state(&thm("2 + (-1)↑ / (x + 1) = 0", &[]))
            .unwrap();
        assert!(s.error);
        assert!(s.first_error().unwrap().contains("metavariables"));
        let s = MockProver::default().get_init_state(&thm("2 + -1 = 1", &[])).unwrap();
        assert!(s.error);
        let s = MockProver::default()
            .get_init_state(&thm("x * (-1 : ℤ) = (-1 : ℤ) * x", &[]))
            .unwrap();
        assert!(!s.error);
    }

    #[test]
    fn deterministic_outputs() {
        let s0 = MockProver::default().get_init_state(&thm("x + 0 = x", &[])).unwrap();
        assert_eq!(run(&s0, "rw [add_comm]"), run(&s0, "rw [add_comm]"));
    }

    #[test]
    fn redundant_steps_example_replays() {
        let t = TheoremRecord::seed(
            "e3",
            vec![Premise::new("n", "ℕ")],
            "2 * n + 1 - n = n + 1",
            tactics(&["rw [two_mul]", "rw [add_assoc]", "rw [add_comm]", "simp"]),
        );
        let v = MockProver::default().is_correct_and_finished(&t).unwrap();
        assert!(v.correct && v.finished, "{v:?}");
    }
}
