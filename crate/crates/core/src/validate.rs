//! Theorem validation: deduplication, replay classification, and the
//! repairs for redundant, mistyped, and incomplete proofs.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_prop, BinOp, Expr, Prop, Rel};
use crate::prover::{Goal, Message, ProofState, Prover, ProverError};
use crate::record::{normalize_text, DatasetStats, RecordSource, TacticStep, TheoremRecord};
use crate::suggest::TacticSuggester;

// ---------------------------------------------------------------------------
// Deduplication

fn rebuild(e: &Expr, f: &dyn Fn(&Expr) -> Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Var(_) | Expr::Meta(_) => e.clone(),
        Expr::Bin(op, l, r) => Expr::Bin(*op, Box::new(f(l)), Box::new(f(r))),
        Expr::Neg(x) => Expr::Neg(Box::new(f(x))),
        Expr::App(name, args) => Expr::App(name.clone(), args.iter().map(f).collect()),
        Expr::Sum { var, lo, hi, body } => Expr::Sum {
            var: var.clone(),
            lo: Box::new(f(lo)),
            hi: Box::new(f(hi)),
            body: Box::new(f(body)),
        },
        Expr::Ascribe(x, ty) => Expr::Ascribe(Box::new(f(x)), ty.clone()),
        Expr::Coe(x) => Expr::Coe(Box::new(f(x))),
    }
}

/// Erase `+ 0`, `0 +`, `- 0`, `* 1`, `1 *` and `/ 1` bottom-up.
pub fn simplify_expr(e: &Expr) -> Expr {
    let e = rebuild(e, &simplify_expr);
    let zero = Expr::Num(0);
    let one = Expr::Num(1);
    match e {
        Expr::Bin(BinOp::Add, l, r) if *r == zero => *l,
        Expr::Bin(BinOp::Add, l, r) if *l == zero => *r,
        Expr::Bin(BinOp::Sub, l, r) if *r == zero => *l,
        Expr::Bin(BinOp::Mul, l, r) if *r == one => *l,
        Expr::Bin(BinOp::Mul, l, r) if *l == one => *r,
        Expr::Bin(BinOp::Div, l, r) if *r == one => *l,
        Expr::Neg(x) if *x == zero => zero,
        other => other,
    }
}

/// Canonical goal text after simplification; unparseable goals fall back
/// to normalized text.
pub fn simplified_goal(goal: &str) -> String {
    match parse_prop(goal) {
        Ok(p) => Prop {
            rel: p.rel,
            lhs: simplify_expr(&p.lhs),
            rhs: simplify_expr(&p.rhs),
        }
        .to_string(),
        Err(_) => normalize_text(goal),
    }
}

/// Two records are duplicates when their premises agree and their goals
/// agree after simplification. Textually identical records always agree.
pub fn dedup_key(record: &TheoremRecord) -> (String, Vec<(String, String)>) {
    let premises = record
        .premises
        .iter()
        .map(|p| (normalize_text(&p.name), normalize_text(&p.type_expr)))
        .collect();
    (simplified_goal(&record.goal), premises)
}

/// First occurrence of each key survives, in input order.
pub fn dedup(records: Vec<TheoremRecord>) -> (Vec<TheoremRecord>, usize) {
    let mut seen = HashSet::new();
    let before = records.len();
    let kept: Vec<TheoremRecord> = records.into_iter().filter(|r| seen.insert(dedup_key(r))).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incomplete,
    TypeError,
    LogicalError,
    RedundantSteps,
    Unrepairable,
}

/// A verdict plus the proof prefix a repair should keep: the shortest
/// finishing prefix for redundant proofs, the error-free prefix for
/// incomplete ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnosis {
    pub verdict: Verdict,
    pub messages: Vec<Message>,
    pub keep: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub verdict: Verdict,
    pub messages: Vec<String>,
    pub repaired: Option<TheoremRecord>,
}

const TYPE_MARKERS: &[&str] = &["metavariables", "failed to synthesize", "typeclass instance", "type mismatch"];

fn is_type_message(text: &str) -> bool {
    TYPE_MARKERS.iter().any(|m| text.contains(m))
}

fn contradicts(a: &Prop, b: &Prop) -> bool {
    let opposite = matches!(
        (a.rel, b.rel),
        (Rel::Eq, Rel::Ne) | (Rel::Ne, Rel::Eq) | (Rel::Lt, Rel::Ge) | (Rel::Ge, Rel::Lt) | (Rel::Le, Rel::Gt) | (Rel::Gt, Rel::Le)
    );
    opposite && crate::expr::alpha_eq(&a.lhs, &b.lhs) && crate::expr::alpha_eq(&a.rhs, &b.rhs)
}

/// Ground arithmetic refutation, or a target directly contradicting a
/// hypothesis.
pub fn refuted(goal: &Goal) -> bool {
    goal.target.eval_ground() == Some(false) || goal.prop_hyps().any(|(_, p)| contradicts(&goal.target, p))
}

fn any_refuted(goals: &[String]) -> bool {
    goals.iter().filter_map(|g| Goal::parse(g).ok()).any(|g| refuted(&g))
}

fn statement_refuted(record: &TheoremRecord) -> bool {
    parse_prop(&record.goal).is_ok_and(|p| p.eval_ground() == Some(false))
}

fn collect(messages: &mut Vec<Message>, state: &ProofState) {
    for m in &state.messages {
        if !messages.contains(m) {
            messages.push(m.clone());
        }
    }
}

fn diagnosis(verdict: Verdict, messages: Vec<Message>, keep: usize) -> Diagnosis {
    Diagnosis {
        verdict,
        messages,
        keep,
    }
}

pub fn classify<P: Prover + ?Sized>(record: &TheoremRecord, prover: &mut P) -> Result<Diagnosis, ProverError> {
    match classify_inner(record, prover) {
        Err(ProverError::Timeout(d)) => Ok(diagnosis(
            Verdict::Unrepairable,
            vec![Message::error(format!("timed out after {d:?}"))],
            0,
        )),
        other => other,
    }
}

fn classify_inner<P: Prover + ?Sized>(record: &TheoremRecord, prover: &mut P) -> Result<Diagnosis, ProverError> {
    let init = prover.get_init_state(record)?;
    let mut messages = init.messages.clone();
    if init.error {
        let msg = init.first_error().unwrap_or_default();
        let typed = is_type_message(msg) || record.goal.contains('↑');
        let verdict = if typed {
            Verdict::TypeError
        } else if statement_refuted(record) {
            Verdict::LogicalError
        } else {
            Verdict::Unrepairable
        };
        return Ok(diagnosis(verdict, messages, 0));
    }
    let mut state = init;
    for (i, step) in record.proof.iter().enumerate() {
        if state.finished {
            return Ok(diagnosis(Verdict::RedundantSteps, messages, i));
        }
        let next = prover.run_tactic(&state, step)?;
        collect(&mut messages, &next);
        if next.error {
            let msg = next.first_error().unwrap_or_default();
            let verdict = if is_type_message(msg) {
                Verdict::TypeError
            } else if any_refuted(&state.goals) {
                Verdict::LogicalError
            } else {
                Verdict::Unrepairable
            };
            return Ok(diagnosis(verdict, messages, i));
        }
        if next.used_sorry() {
            let verdict = if any_refuted(&state.goals) {
                Verdict::LogicalError
            } else {
                Verdict::Incomplete
            };
            return Ok(diagnosis(verdict, messages, i));
        }
        state = next;
    }
    let n = record.proof.len();
    if state.finished {
        let v = prover.is_correct_and_finished(record)?;
        let verdict = if v.correct && v.finished {
            Verdict::Correct
        } else {
            Verdict::Unrepairable
        };
        return Ok(diagnosis(verdict, v.messages, n));
    }
    let verdict = if any_refuted(&state.goals) {
        Verdict::LogicalError
    } else {
        Verdict::Incomplete
    };
    Ok(diagnosis(verdict, messages, n))
}

// ---------------------------------------------------------------------------
// Repairs

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepairError {
    #[error("repair failed: {0}")]
    RepairFailed(String),
    #[error(transparent)]
    Prover(#[from] ProverError),
}

fn corrected(record: &TheoremRecord, proof: Vec<TacticStep>) -> TheoremRecord {
    let mut out = record.clone();
    out.proof = proof;
    out.source = RecordSource::Corrected;
    out
}

/// Truncate at the shortest finishing prefix.
pub fn repair_redundant<P: Prover + ?Sized>(record: &TheoremRecord, prover: &mut P) -> Result<TheoremRecord, RepairError> {
    let mut state = prover.get_init_state(record)?;
    for (i, step) in record.proof.iter().enumerate() {
        if state.finished {
            return Ok(corrected(record, record.proof[..i].to_vec()));
        }
        state = prover.run_tactic(&state, step)?;
        if state.error {
            break;
        }
    }
    Err(RepairError::RepairFailed("no finishing strict prefix".into()))
}

fn ascriptions(e: &Expr, out: &mut Vec<(Expr, String)>) {
    if let Expr::Ascribe(inner, ty) = e {
        out.push(((**inner).clone(), ty.clone()));
    }
    for c in e.children() {
        ascriptions(c, out);
    }
}

fn statement_props(record: &TheoremRecord) -> Vec<Prop> {
    let mut props: Vec<Prop> = record.premises.iter().filter_map(|p| parse_prop(&p.type_expr).ok()).collect();
    props.extend(parse_prop(&record.goal).ok());
    props
}

fn annotate(e: &Expr, known: &[(Expr, String)], default: &str) -> Expr {
    let typed = |x: &Expr| {
        let ty = known
            .iter()
            .find(|(k, _)| crate::expr::alpha_eq(k, x))
            .map_or(default, |(_, t)| t.as_str());
        Expr::Ascribe(Box::new(x.clone()), ty.to_string())
    };
    match e {
        Expr::Ascribe(..) => e.clone(),
        Expr::Neg(_) => typed(&rebuild(e, &|c| annotate(c, known, default))),
        Expr::Coe(x) => typed(&annotate(x, known, default)),
        _ => rebuild(e, &|c| annotate(c, known, default)),
    }
}

fn annotate_text(text: &str, known: &[(Expr, String)], default: &str) -> String {
    match parse_prop(text) {
        Ok(p) => Prop {
            rel: p.rel,
            lhs: annotate(&p.lhs, known, default),
            rhs: annotate(&p.rhs, known, default),
        }
        .to_string(),
        Err(_) => text.to_string(),
    }
}

/// Copy type ascriptions from the root statement onto bare negations and
/// coercion markers of the candidate. The proof is left untouched.
pub fn repair_type(record: &TheoremRecord, root: &TheoremRecord) -> Result<TheoremRecord, RepairError> {
    let mut known = Vec::new();
    for p in statement_props(root) {
        ascriptions(&p.lhs, &mut known);
        ascriptions(&p.rhs, &mut known);
    }
    let Some(default) = known.first().map(|(_, t)| t.clone()) else {
        return Err(RepairError::RepairFailed(format!("root `{}` carries no type ascriptions", root.name)));
    };
    let mut out = record.clone();
    out.goal = annotate_text(&record.goal, &known, &default);
    for p in &mut out.premises {
        if parse_prop(&p.type_expr).is_ok() {
            p.type_expr = annotate_text(&p.type_expr, &known, &default);
        }
    }
    if out == *record {
        return Err(RepairError::RepairFailed("nothing to annotate".into()));
    }
    out.source = RecordSource::Corrected;
    Ok(out)
}

/// UCB1 statistics of one repair-tree node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairNodeStats {
    pub w: f64,
    pub n: u32,
    pub n_p: u32,
    pub c: f64,
}

/// `W/N + C·sqrt(ln N_p / N)`; unvisited nodes score +∞.
pub fn ucb1(s: &RepairNodeStats) -> f64 {
    if s.n == 0 {
        return f64::INFINITY;
    }
    let n = f64::from(s.n);
    s.w / n + s.c * (f64::from(s.n_p).ln() / n).sqrt()
}

/// Index of the child with the highest UCB1 score; earlier children win
/// ties, so every unvisited child is tried before any visited one.
pub fn ucb1_select(children: &[RepairNodeStats]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in children.iter().enumerate() {
        let score = ucb1(s);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairLimits {
    pub candidates: usize,
    pub simulations: usize,
    pub c: f64,
    pub max_depth: usize,
}

impl Default for RepairLimits {
    fn default() -> Self {
        Self {
            candidates: 16,
            simulations: 100,
            c: std::f64::consts::SQRT_2,
            max_depth: 8,
        }
    }
}

struct RepairNode {
    state: ProofState,
    tactic: Option<TacticStep>,
    parent: Option<usize>,
    children: Vec<usize>,
    expanded: bool,
    w: f64,
    n: u32,
    depth: usize,
}

fn suffix_to(nodes: &[RepairNode], mut id: usize) -> Vec<TacticStep> {
    let mut out = Vec::new();
    while let Some(t) = &nodes[id].tactic {
        out.push(t.clone());
        id = nodes[id].parent.expect("non-root node has a parent");
    }
    out.reverse();
    out
}

/// UCB1 search for a suffix closing every goal left open by the proof's
/// error-free prefix of length `keep`.
pub fn repair_incomplete<P: Prover + ?Sized>(
    record: &TheoremRecord,
    keep: usize,
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    limits: &RepairLimits,
) -> Result<TheoremRecord, RepairError> {
    let prefix = &record.proof[..keep.min(record.proof.len())];
    let mut state = prover.get_init_state(record)?;
    for step in prefix {
        state = prover.run_tactic(&state, step)?;
    }
    if state.error || state.finished {
        return Err(RepairError::RepairFailed("prefix does not end at an open state".into()));
    }
    let mut seen: HashSet<Vec<String>> = HashSet::from([state.goals.clone()]);
    let mut nodes = vec![RepairNode {
        state,
        tactic: None,
        parent: None,
        children: Vec::new(),
        expanded: false,
        w: 0.0,
        n: 0,
        depth: 0,
    }];
    for _ in 0..limits.simulations {
        let mut id = 0;
        while nodes[id].expanded && !nodes[id].children.is_empty() {
            let n_p = nodes[id].n.max(1);
            let stats: Vec<RepairNodeStats> = nodes[id]
                .children
                .iter()
                .map(|&k| RepairNodeStats {
                    w: nodes[k].w,
                    n: nodes[k].n,
                    n_p,
                    c: limits.c,
                })
                .collect();
            id = nodes[id].children[ucb1_select(&stats).expect("nonempty children")];
        }
        if !nodes[id].expanded && nodes[id].depth < limits.max_depth {
            nodes[id].expanded = true;
            let cands = suggester
                .suggest(&nodes[id].state.goals, limits.candidates)
                .map_err(|e| RepairError::RepairFailed(e.to_string()))?;
            for c in cands {
                let Ok(step) = TacticStep::new(&c.text) else { continue };
                let next = prover.run_tactic(&nodes[id].state, &step)?;
                if next.error || next.used_sorry() {
                    continue;
                }
                let child = nodes.len();
                let depth = nodes[id].depth + 1;
                let finished = next.finished;
                if !finished && !seen.insert(next.goals.clone()) {
                    continue;
                }
                nodes.push(RepairNode {
                    state: next,
                    tactic: Some(step),
                    parent: Some(id),
                    children: Vec::new(),
                    expanded: false,
                    w: 0.0,
                    n: 0,
                    depth,
                });
                nodes[id].children.push(child);
                if finished {
                    let mut proof = prefix.to_vec();
                    proof.extend(suffix_to(&nodes, child));
                    return Ok(corrected(record, proof));
                }
            }
        }
        // no closing tactic found on this simulation: reward 0
        let mut cur = Some(id);
        while let Some(k) = cur {
            nodes[k].n += 1;
            cur = nodes[k].parent;
        }
        if nodes[0].expanded && nodes[0].children.is_empty() {
            break;
        }
    }
    Err(RepairError::RepairFailed("simulation budget exhausted".into()))
}

// ---------------------------------------------------------------------------
// Batch validation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub record: TheoremRecord,
    pub verdict: Verdict,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validated {
    Accepted { record: TheoremRecord, corrected: bool },
    Rejected(Reject),
}

fn texts(messages: &[Message]) -> Vec<String> {
    messages.iter().map(|m| m.text.clone()).collect()
}

fn confirm<P: Prover + ?Sized>(
    repaired: Result<TheoremRecord, RepairError>,
    original: &TheoremRecord,
    verdict: Verdict,
    prover: &mut P,
) -> Result<Validated, ProverError> {
    let reject = |why: String| {
        Validated::Rejected(Reject {
            record: original.clone(),
            verdict,
            messages: vec![why],
        })
    };
    match repaired {
        Ok(record) => {
            let v = match prover.is_correct_and_finished(&record) {
                Err(ProverError::Timeout(d)) => return Ok(reject(format!("timed out after {d:?}"))),
                other => other?,
            };
            Ok(if v.correct && v.finished {
                Validated::Accepted { record, corrected: true }
            } else {
                reject("repaired proof does not verify".into())
            })
        }
        Err(RepairError::Prover(ProverError::Timeout(d))) => Ok(reject(format!("timed out after {d:?}"))),
        Err(RepairError::Prover(e)) => Err(e),
        Err(RepairError::RepairFailed(why)) => Ok(reject(why)),
    }
}

/// Classify one record and route it to its repair.
pub fn validate_one<P: Prover + ?Sized>(
    record: &TheoremRecord,
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    roots: &HashMap<String, TheoremRecord>,
    limits: &RepairLimits,
) -> Result<Validated, ProverError> {
    let d = classify(record, prover)?;
    match d.verdict {
        Verdict::Correct => Ok(Validated::Accepted {
            record: record.clone(),
            corrected: false,
        }),
        Verdict::RedundantSteps => confirm(repair_redundant(record, prover), record, d.verdict, prover),
        Verdict::Incomplete => {
            let fixed = repair_incomplete(record, d.keep, prover, suggester, limits);
            confirm(fixed, record, d.verdict, prover)
        }
        Verdict::TypeError => {
            let root = record
                .provenance
                .as_ref()
                .and_then(|p| roots.get(&p.root_name))
                .ok_or_else(|| RepairError::RepairFailed("root theorem unavailable".into()));
            let retyped = root.and_then(|root| repair_type(record, root));
            let fixed = match retyped {
                Ok(t) => follow_up(t, prover, suggester, limits),
                Err(e) => Err(e),
            };
            confirm(fixed, record, d.verdict, prover)
        }
        Verdict::LogicalError | Verdict::Unrepairable => Ok(Validated::Rejected(Reject {
            record: record.clone(),
            verdict: d.verdict,
            messages: texts(&d.messages),
        })),
    }
}

/// After a type repair the proof may still be redundant or incomplete.
fn follow_up<P: Prover + ?Sized>(
    record: TheoremRecord,
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    limits: &RepairLimits,
) -> Result<TheoremRecord, RepairError> {
    let d = classify(&record, prover)?;
    match d.verdict {
        Verdict::Correct => Ok(record),
        Verdict::RedundantSteps => repair_redundant(&record, prover),
        Verdict::Incomplete => repair_incomplete(&record, d.keep, prover, suggester, limits),
        other => Err(RepairError::RepairFailed(format!("still {other:?} after retyping"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub accepted: Vec<TheoremRecord>,
    pub rejects: Vec<Reject>,
    pub stats: DatasetStats,
}

/// Assemble stats from the deduplicated set and per-record outcomes.
pub fn summarize(n_candidate: usize, unique: &[TheoremRecord], outcomes: Vec<Validated>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut correct = Vec::new();
    let mut fixed = Vec::new();
    for o in outcomes {
        match o {
            Validated::Accepted { record, corrected } => {
                if corrected {
                    fixed.push(record.prediction_steps());
                } else {
                    correct.push(record.prediction_steps());
                }
                report.accepted.push(record);
            }
            Validated::Rejected(r) => report.rejects.push(r),
        }
    }
    let dedup_steps: Vec<usize> = unique.iter().map(|r| r.prediction_steps()).collect();
    report.stats = DatasetStats::from_steps(n_candidate as u64, &dedup_steps, &correct, &fixed);
    report
}

/// Dedup, classify, repair, in input order on one prover session.
pub fn validate_all<P: Prover + ?Sized>(
    records: Vec<TheoremRecord>,
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    roots: &HashMap<String, TheoremRecord>,
    limits: &RepairLimits,
) -> Result<ValidationReport, ProverError> {
    let n = records.len();
    let (unique, _) = dedup(records);
    let outcomes = unique
        .iter()
        .map(|r| validate_one(r, prover, suggester, roots, limits))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(n, &unique, outcomes))
}

/// Histogram of verdicts, for reporting.
pub fn verdict_counts(rejects: &[Reject]) -> BTreeMap<Verdict, usize> {
    let mut out = BTreeMap::new();
    for r in rejects {
        *out.entry(r.verdict).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prover::{MockProver, RuleTable};
    use crate::record::{tactics, Premise, Provenance};
    use crate::suggest::RuleSuggester;

    fn thm(goal: &str, proof: &[&str]) -> TheoremRecord {
        TheoremRecord::seed("t", vec![Premise::new("x", "ℕ")], goal, tactics(proof))
    }

    fn verdict(goal: &str, proof: &[&str]) -> Verdict {
        classify(&thm(goal, proof), &mut MockProver::default()).unwrap().verdict
    }

    #[test]
    fn simplification_merges() {
        assert_eq!(simplified_goal("x + 0 = x * 1"), "x = x");
        assert_eq!(simplified_goal("(x - 0) / 1 = 1 * (0 + x)"), "x = x");
        let a = thm("x + 0 = x * 1", &["simp"]);
        let b = thm("x = x", &["rfl"]);
        let mut c = thm("x = x", &["rfl"]);
        c.premises.push(Premise::new("y", "ℕ"));
        let (kept, dropped) = dedup(vec![a.clone(), b, c.clone()]);
        assert_eq!(kept, vec![a, c]);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(verdict("x + 0 = x", &["rw [add_zero]", "rfl"]), Verdict::Correct);
        assert_eq!(verdict("x + 0 = x", &["rw [add_zero]", "rfl", "rw [add_zero]"]), Verdict::RedundantSteps);
        assert_eq!(verdict("x + 0 = x", &["rw [add_zero]"]), Verdict::Incomplete);
        assert_eq!(verdict("x + 0 = x", &["sorry"]), Verdict::Incomplete);
        assert_eq!(verdict("(-1)↑ + x = x", &["simp"]), Verdict::TypeError);
        assert_eq!(verdict("2 + 2 = 5", &["rfl"]), Verdict::LogicalError);
        assert_eq!(verdict("x + 0 = x", &["rw [no_such_rule]"]), Verdict::Unrepairable);
    }

    #[test]
    fn redundant_repair_keeps_shortest_prefix() {
        let mut p = MockProver::default();
        let r = thm("x + 0 = x", &["rw [add_zero]", "rfl", "rfl", "simp"]);
        let fixed = repair_redundant(&r, &mut p).unwrap();
        assert_eq!(fixed.proof, tactics(&["rw [add_zero]", "rfl"]));
        assert_eq!(fixed.source, RecordSource::Corrected);
    }

    #[test]
    fn ucb1_arithmetic() {
        let s = RepairNodeStats {
            w: 3.0,
            n: 4,
            n_p: 10,
            c: 1.414,
        };
        assert!((ucb1(&s) - 1.8228).abs() < 1e-3);
        assert!(ucb1(&RepairNodeStats { n: 0, ..s }).is_infinite());
    }

    #[test]
    fn incomplete_repair_appends_rfl() {
        let mut p = MockProver::default();
        let s = RuleSuggester::new(RuleTable::default());
        let r = thm("x + 0 = x", &["rw [add_zero]"]);
        let fixed = repair_incomplete(&r, 1, &mut p, &s, &RepairLimits::default()).unwrap();
        assert!(p.is_correct_and_finished(&fixed).unwrap().finished);
        assert_eq!(&fixed.proof[..1], &r.proof[..]);
    }

    #[test]
    fn type_repair_from_root() {
        let root = TheoremRecord::seed("root", vec![], "(-1 : ℤ) + 0 = (-1 : ℤ)", tactics(&["rw [add_zero]", "rfl"]));
        let mut cand = TheoremRecord::seed("c", vec![], "(-1) + 0 = -1", tactics(&["rw [add_zero]", "rfl"]));
        cand.source = RecordSource::Generated;
        cand.provenance = Some(Provenance {
            root_name: "root".into(),
            path_id: "root/p1".into(),
            prediction_steps: 1,
        });
        let mut p = MockProver::default();
        assert_eq!(classify(&cand, &mut p).unwrap().verdict, Verdict::TypeError);
        let fixed = repair_type(&cand, &root).unwrap();
        assert_eq!(fixed.goal, "(-1 : ℤ) + 0 = (-1 : ℤ)");
        let roots = HashMap::from([("root".to_string(), root)]);
        let s = RuleSuggester::new(RuleTable::default());
        let out = validate_one(&cand, &mut p, &s, &roots, &RepairLimits::default()).unwrap();
        assert!(matches!(out, Validated::Accepted { corrected: true, .. }));
    }

    #[test]
    fn batch_counts() {
        let mut p = MockProver::default();
        let s = RuleSuggester::new(RuleTable::default());
        let gen = |goal: &str, proof: &[&str]| {
            let mut t = thm(goal, proof);
            t.source = RecordSource::Generated;
            t.provenance = Some(Provenance {
                root_name: "r".into(),
                path_id: "r/p1".into(),
                prediction_steps: proof.len(),
            });
            t
        };
        let batch = vec![
            gen("x + 0 = x", &["rw [add_zero]", "rfl"]),
            gen("x + 0 = x", &["rw [add_zero]", "rfl"]),
            gen("x + x = 2 * x", &["rw [two_mul]"]),
            gen("2 + 2 = 5", &["rfl"]),
        ];
        let rep = validate_all(batch, &mut p, &s, &HashMap::new(), &RepairLimits::default()).unwrap();
        assert_eq!(rep.stats.n_candidate(), 4);
        assert_eq!(rep.stats.n_deduplicated(), 3);
        assert_eq!(rep.stats.n_correct(), 1);
        assert_eq!(rep.stats.n_corrected(), 1);
        assert_eq!(rep.stats.n_new(), 2);
        assert_eq!(rep.rejects.len(), 1);
        assert_eq!(rep.rejects[0].verdict, Verdict::LogicalError);
        rep.stats.check().unwrap();
    }
}
