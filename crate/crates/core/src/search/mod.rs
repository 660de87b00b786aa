//! PUCT tree search from a partial proof path's tip state.
//!
//! Simulations run in batches per decision: after `simulations` rollouts
//! from the current decision node, the most visited child becomes the next
//! decision node. A search stops at the first proof, when the decision
//! node has no viable child, at the depth limit, or when time runs out.

mod guidance;

pub use guidance::{features, Features, GuidanceError, GuidanceModel, GuidanceSample, Mlp, FEATURE_DIM, HIDDEN, SLOTS};

use std::cmp::Ordering;
use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::P3;
use crate::prover::{ProofState, Prover, ProverError};
use crate::record::{StateTacticPair, TacticStep};
use crate::suggest::{SuggestError, TacticSuggester};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchLimits {
    pub c_puct: f64,
    #[serde(rename = "simulations", alias = "simulations_per_decision")]
    pub simulations_per_decision: usize,
    pub max_candidates: usize,
    #[serde(rename = "time_budget_secs")]
    pub time_budget_secs: f64,
    pub events_per_iteration: usize,
    pub train_iterations: usize,
    pub max_depth: usize,
    /// Weight of the learned critic/policy against the plain estimate.
    pub blend: f64,
    pub learning_rate: f64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            c_puct: 1.0,
            simulations_per_decision: 100,
            max_candidates: 16,
            time_budget_secs: 300.0,
            events_per_iteration: 20,
            train_iterations: 10,
            max_depth: 20,
            blend: 0.5,
            learning_rate: 1e-2,
        }
    }
}

impl SearchLimits {
    pub fn check(&self) -> Result<(), String> {
        let positive = [
            ("simulations", self.simulations_per_decision),
            ("max_candidates", self.max_candidates),
            ("events_per_iteration", self.events_per_iteration),
            ("max_depth", self.max_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("search.{name} must be positive"));
            }
        }
        if !(self.c_puct >= 0.0) || !(self.time_budget_secs >= 0.0) || !(self.learning_rate > 0.0) {
            return Err("search.c_puct, time_budget_secs and learning_rate must be nonnegative/positive".into());
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err("search.blend must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn time_budget(&self) -> Duration {
        Duration::from_secs_f64(self.time_budget_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Open,
    Proved,
    Failed,
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct ChildEdge {
    pub tactic: TacticStep,
    pub n: u32,
    pub w: f64,
    pub q: f64,
    pub p: f64,
    /// Rank of the tactic in the suggester's list at expansion.
    pub slot: usize,
    pub child: NodeId,
}

impl ChildEdge {
    pub fn new(tactic: TacticStep, p: f64, slot: usize, child: NodeId) -> Self {
        Self {
            tactic,
            n: 0,
            w: 0.0,
            q: 0.0,
            p,
            slot,
            child,
        }
    }

    pub fn record(&mut self, value: f64) {
        self.n += 1;
        self.w += value;
        self.q = self.w / self.n as f64;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: ProofState,
    pub children: Vec<ChildEdge>,
    pub terminal: Terminal,
    pub depth: usize,
    pub expanded: bool,
    /// Number of candidates the suggester returned at expansion.
    pub n_slots: usize,
    pub parent: Option<(NodeId, usize)>,
}

impl SearchNode {
    fn new(state: ProofState, depth: usize, parent: Option<(NodeId, usize)>) -> Self {
        let terminal = if state.error {
            Terminal::Failed
        } else if state.finished {
            Terminal::Proved
        } else {
            Terminal::Open
        };
        Self {
            state,
            children: Vec::new(),
            terminal,
            depth,
            expanded: false,
            n_slots: 0,
            parent,
        }
    }

    pub fn child(&self, tactic: &str) -> Option<&ChildEdge> {
        self.children.iter().find(|e| e.tactic.text() == tactic)
    }

    pub fn visit_sum(&self) -> u32 {
        self.children.iter().map(|e| e.n).sum()
    }
}

/// Nodes in an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new(root: ProofState) -> Self {
        Self {
            nodes: vec![SearchNode::new(root, 0, None)],
        }
    }

    /// Tactics from the root to `id`.
    pub fn path_to(&self, mut id: NodeId) -> Vec<TacticStep> {
        let mut out = Vec::new();
        while let Some((parent, edge)) = self.nodes[id].parent {
            out.push(self.nodes[parent].children[edge].tactic.clone());
            id = parent;
        }
        out.reverse();
        out
    }

    /// Attach a child reached by `tactic` from `parent`.
    pub fn push_child(&mut self, parent: NodeId, tactic: TacticStep, p: f64, slot: usize, state: ProofState) -> NodeId {
        let child = self.nodes.len();
        let idx = self.nodes[parent].children.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode::new(state, depth, Some((parent, idx))));
        self.nodes[parent].children.push(ChildEdge::new(tactic, p, slot, child));
        child
    }

    fn viable_children(&self, id: NodeId) -> impl Iterator<Item = (usize, &ChildEdge)> {
        self.nodes[id]
            .children
            .iter()
            .enumerate()
            .filter(|(_, e)| self.nodes[e.child].terminal != Terminal::Failed)
    }
}

/// `Q + c · P · sqrt(Σ_b N(s,b)) / (N + 1)`, with `Q = 0` for an unvisited edge.
pub fn puct_score(edge: &ChildEdge, sibling_visit_sum: u32, c_puct: f64) -> f64 {
    let q = if edge.n == 0 { 0.0 } else { edge.q };
    q + c_puct * edge.p * (sibling_visit_sum as f64).sqrt() / (edge.n as f64 + 1.0)
}

/// Higher score, then higher prior, then lexicographically smaller text.
fn better(a: (f64, &ChildEdge), b: (f64, &ChildEdge)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.1.p.total_cmp(&b.1.p) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a.1.tactic.text() < b.1.tactic.text(),
        },
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no viable child")]
pub struct NoViableChild;

/// Index of the non-failed child edge with the best PUCT score.
pub fn select(tree: &SearchTree, node: NodeId, c_puct: f64) -> Result<usize, NoViableChild> {
    let sum = tree.nodes[node].visit_sum();
    let mut best: Option<(usize, f64)> = None;
    for (idx, edge) in tree.viable_children(node) {
        let score = puct_score(edge, sum, c_puct);
        let take = match best {
            None => true,
            Some((b, bs)) => better((score, edge), (bs, &tree.nodes[node].children[b])),
        };
        if take {
            best = Some((idx, score));
        }
    }
    best.map(|(i, _)| i).ok_or(NoViableChild)
}

/// `N += 1, W += v, Q = W / N` along the path; no sign flip.
pub fn backpropagate<'a>(path: impl IntoIterator<Item = &'a mut ChildEdge>, value: f64) {
    for edge in path {
        edge.record(value);
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Prover(#[from] ProverError),
    #[error(transparent)]
    Suggest(#[from] SuggestError),
}

pub struct SearchContext<'a, P: Prover + ?Sized> {
    pub suggester: &'a dyn TacticSuggester,
    pub prover: &'a mut P,
    pub guidance: Option<&'a GuidanceModel>,
    pub limits: &'a SearchLimits,
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Expand an open leaf. Tactics reaching a state already present in the
/// tree are dropped; erroring tactics become failed children with zero
/// prior. Returns the number of viable children added.
pub fn expand<P: Prover + ?Sized>(
    tree: &mut SearchTree,
    node: NodeId,
    ctx: &mut SearchContext<'_, P>,
    seen: &mut HashSet<Vec<String>>,
    pairs: &mut Vec<StateTacticPair>,
) -> Result<usize, SearchError> {
    debug_assert!(!tree.nodes[node].expanded && tree.nodes[node].terminal == Terminal::Open);
    let state = tree.nodes[node].state.clone();
    let cands = match ctx.suggester.suggest(&state.goals, ctx.limits.max_candidates) {
        Ok(c) => c,
        Err(SuggestError::EmptyCompletion) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    tree.nodes[node].expanded = true;
    tree.nodes[node].n_slots = cands.len();

    let mut viable = Vec::new();
    let mut failed = Vec::new();
    for (slot, cand) in cands.iter().enumerate() {
        let Ok(tactic) = TacticStep::new(&cand.text) else {
            continue;
        };
        let next = ctx.prover.run_tactic(&state, &tactic)?;
        if next.error {
            failed.push((slot, tactic, next));
            continue;
        }
        pairs.push(StateTacticPair::new(&tactic, state.goals.clone(), next.goals.clone()));
        if !next.finished && !seen.insert(next.goals.clone()) {
            continue;
        }
        viable.push((slot, cand.score, tactic, next));
    }

    let scores: Vec<f64> = viable.iter().map(|v| v.1).collect();
    let mut priors = softmax(&scores);
    if let Some(model) = ctx.guidance {
        let learned = model.guidance_priors(&state.goals, cands.len());
        let mass: f64 = viable.iter().map(|v| learned[v.0]).sum();
        if mass > 0.0 {
            let b = ctx.limits.blend;
            for (p, v) in priors.iter_mut().zip(&viable) {
                *p = b * learned[v.0] / mass + (1.0 - b) * *p;
            }
        }
    }
    let added = viable.len();
    for ((slot, _, tactic, next), p) in viable.into_iter().zip(priors) {
        tree.push_child(node, tactic, p, slot, next);
    }
    for (slot, tactic, next) in failed {
        tree.push_child(node, tactic, 0.0, slot, next);
    }
    if added == 0 {
        tree.nodes[node].terminal = Terminal::Failed;
    }
    Ok(added)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundProof {
    /// Full proof from the theorem's initial state (P3 prefix included).
    pub tactics: Vec<TacticStep>,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub path_id: String,
    pub prefix_from_p3: Vec<TacticStep>,
    pub predicted: Vec<TacticStep>,
    pub leaf_goals: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SearchResult {
    pub proofs: Vec<FoundProof>,
    pub candidate_paths: Vec<CandidatePath>,
    pub visited_pairs: Vec<StateTacticPair>,
    pub samples: Vec<GuidanceSample>,
    pub simulations: usize,
    /// Simulations that descended through an edge of the root.
    pub root_passes: usize,
    pub tree: Option<SearchTree>,
}

fn leaf_value<P: Prover + ?Sized>(ctx: &SearchContext<'_, P>, state: &ProofState) -> f64 {
    match ctx.guidance {
        Some(model) => ctx.limits.blend * model.guidance_value(&state.goals),
        None => 0.0,
    }
}

/// One select-expand-backpropagate pass below `start`. Returns the ids of
/// proved nodes discovered.
fn simulate<P: Prover + ?Sized>(
    tree: &mut SearchTree,
    start: NodeId,
    ctx: &mut SearchContext<'_, P>,
    seen: &mut HashSet<Vec<String>>,
    pairs: &mut Vec<StateTacticPair>,
) -> Result<(Vec<(NodeId, usize)>, Vec<NodeId>), SearchError> {
    let mut path: Vec<(NodeId, usize)> = Vec::new();
    let mut node = start;
    let mut proved = Vec::new();
    let value = loop {
        match tree.nodes[node].terminal {
            Terminal::Proved => break 1.0,
            Terminal::Failed => break -1.0,
            Terminal::Open => {}
        }
        if !tree.nodes[node].expanded {
            if tree.nodes[node].depth - tree.nodes[start].depth >= ctx.limits.max_depth
                || tree.nodes[node].depth >= ctx.limits.max_depth
            {
                break leaf_value(ctx, &tree.nodes[node].state);
            }
            expand(tree, node, ctx, seen, pairs)?;
            if tree.nodes[node].terminal == Terminal::Failed {
                break -1.0;
            }
            proved = tree.nodes[node]
                .children
                .iter()
                .map(|e| e.child)
                .filter(|&c| tree.nodes[c].terminal == Terminal::Proved)
                .collect();
            if let Some(&first) = proved.first() {
                let (parent, edge) = tree.nodes[first].parent.expect("child has parent");
                path.push((parent, edge));
                break 1.0;
            }
            break leaf_value(ctx, &tree.nodes[node].state);
        }
        match select(tree, node, ctx.limits.c_puct) {
            Ok(edge) => {
                path.push((node, edge));
                node = tree.nodes[node].children[edge].child;
            }
            Err(NoViableChild) => {
                tree.nodes[node].terminal = Terminal::Failed;
                break -1.0;
            }
        }
    };
    for &(n, e) in &path {
        tree.nodes[n].children[e].record(value);
    }
    Ok((path, proved))
}

/// Best child by visit count (ties: prior, then text).
fn most_visited(tree: &SearchTree, node: NodeId) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (idx, edge) in tree.viable_children(node) {
        let take = match best {
            None => true,
            Some(b) => better((edge.n as f64, edge), (tree.nodes[node].children[b].n as f64, &tree.nodes[node].children[b])),
        };
        if take {
            best = Some(idx);
        }
    }
    best
}

/// Search from the P3 tip.
pub fn run_search<P: Prover + ?Sized>(p3: &P3, ctx: &mut SearchContext<'_, P>) -> Result<SearchResult, SearchError> {
    let started = Instant::now();
    let budget = ctx.limits.time_budget();
    let mut tree = SearchTree::new(p3.tip_state.clone());
    let mut result = SearchResult::default();
    if budget.is_zero() || tree.nodes[0].terminal != Terminal::Open {
        result.tree = Some(tree);
        return Ok(result);
    }
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    seen.insert(p3.tip_state.goals.clone());
    let mut pairs = Vec::new();
    let mut decision = 0;
    let mut proved: Vec<NodeId> = Vec::new();
    'search: loop {
        for _ in 0..ctx.limits.simulations_per_decision {
            if started.elapsed() >= budget {
                break 'search;
            }
            let (path, found) = simulate(&mut tree, decision, ctx, &mut seen, &mut pairs)?;
            result.simulations += 1;
            if path.first().is_some_and(|&(n, _)| n == 0) {
                result.root_passes += 1;
            }
            if !found.is_empty() {
                proved = found;
                break 'search;
            }
            if tree.nodes[decision].terminal == Terminal::Failed {
                break 'search;
            }
        }
        match most_visited(&tree, decision) {
            Some(edge) => decision = tree.nodes[decision].children[edge].child,
            None => break,
        }
        if tree.nodes[decision].depth >= ctx.limits.max_depth {
            break;
        }
    }

    for id in proved {
        let predicted = tree.path_to(id);
        let mut tactics = p3.prefix.clone();
        tactics.extend(predicted.iter().cloned());
        result.proofs.push(FoundProof {
            predicted: predicted.len(),
            tactics,
        });
    }
    result.candidate_paths = candidate_paths(&tree, p3, ctx.limits.max_candidates);
    result.samples = harvest_samples(&tree);
    let mut uniq = HashSet::new();
    pairs.retain(|p| uniq.insert(p.clone()));
    result.visited_pairs = pairs;
    result.tree = Some(tree);
    Ok(result)
}

/// Live leaves below the root that were never expanded or expanded to no
/// viable child, most visited first, capped at `cap`.
pub fn candidate_paths(tree: &SearchTree, p3: &P3, cap: usize) -> Vec<CandidatePath> {
    let mut leaves: Vec<(u32, usize, Vec<TacticStep>, NodeId)> = Vec::new();
    for (id, node) in tree.nodes.iter().enumerate().skip(1) {
        if node.state.error || node.state.finished {
            continue;
        }
        let unexpandable = !node.expanded || tree.viable_children(id).next().is_none();
        if !unexpandable {
            continue;
        }
        let (parent, edge) = node.parent.expect("non-root node");
        leaves.push((tree.nodes[parent].children[edge].n, node.depth, tree.path_to(id), id));
    }
    leaves.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| {
            let ta: Vec<&str> = a.2.iter().map(|t| t.text()).collect();
            let tb: Vec<&str> = b.2.iter().map(|t| t.text()).collect();
            ta.cmp(&tb)
        })
    });
    leaves.truncate(cap);
    leaves
        .into_iter()
        .enumerate()
        .map(|(k, (_, _, predicted, id))| CandidatePath {
            path_id: format!("{}/c{k}", p3.path_id),
            prefix_from_p3: p3.prefix.clone(),
            predicted,
            leaf_goals: tree.nodes[id].state.goals.clone(),
        })
        .collect()
}

/// +1 samples along every proof path (with the chosen slot), −1 samples at
/// live nodes that expanded to nothing.
pub fn harvest_samples(tree: &SearchTree) -> Vec<GuidanceSample> {
    let mut out = Vec::new();
    for (id, node) in tree.nodes.iter().enumerate() {
        if node.terminal == Terminal::Proved && node.state.finished {
            let mut cur = id;
            while let Some((parent, edge)) = tree.nodes[cur].parent {
                let p = &tree.nodes[parent];
                out.push(GuidanceSample {
                    features: features(&p.state.goals),
                    value: 1.0,
                    chosen: Some((p.children[edge].slot, p.n_slots)),
                });
                cur = parent;
            }
        } else if node.terminal == Terminal::Failed && !node.state.error {
            out.push(GuidanceSample {
                features: features(&node.state.goals),
                value: -1.0,
                chosen: None,
            });
        }
    }
    out
}

/// The training schedule: per iteration, `events_per_iteration` full
/// searches (round-robin over `starts`), then one SGD epoch on their
/// samples. Returns the sample count of each iteration.
pub fn train_guidance<P: Prover + ?Sized>(
    model: &mut GuidanceModel,
    starts: &[P3],
    suggester: &dyn TacticSuggester,
    prover: &mut P,
    limits: &SearchLimits,
    rng: &mut dyn RngCore,
) -> Result<Vec<usize>, SearchError> {
    let mut sizes = Vec::new();
    if starts.is_empty() {
        return Ok(sizes);
    }
    for it in 0..limits.train_iterations {
        let mut samples = Vec::new();
        for e in 0..limits.events_per_iteration {
            let p3 = &starts[(it * limits.events_per_iteration + e) % starts.len()];
            let snapshot = model.clone();
            let mut ctx = SearchContext {
                suggester,
                prover: &mut *prover,
                guidance: Some(&snapshot),
                limits,
            };
            samples.extend(run_search(p3, &mut ctx)?.samples);
        }
        model.train(&samples, limits.learning_rate, rng);
        sizes.push(samples.len());
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prover::{MockProver, RuleTable};
    use crate::record::{Premise, TheoremRecord};
    use crate::suggest::RuleSuggester;

    fn edge(q: f64, n: u32, p: f64, text: &str) -> ChildEdge {
        ChildEdge {
            tactic: TacticStep::parse(text),
            n,
            w: q * n as f64,
            q,
            p,
            slot: 0,
            child: 0,
        }
    }

    #[test]
    fn puct_examples() {
        assert!((puct_score(&edge(0.5, 2, 0.6, "a"), 4, 1.0) - 0.9).abs() < 1e-12);
        assert_eq!(puct_score(&edge(0.5, 2, 0.6, "a"), 4, 0.0), 0.5);
        assert_eq!(puct_score(&edge(0.0, 0, 0.6, "a"), 0, 1.0), 0.0);
    }

    fn tree_with(edges: Vec<ChildEdge>) -> SearchTree {
        let root = ProofState::live("t", vec![1], vec!["⊢ x = x".into()], vec![]);
        let mut tree = SearchTree::new(root.clone());
        for mut e in edges {
            e.child = tree.nodes.len();
            let idx = tree.nodes[0].children.len();
            tree.nodes.push(SearchNode::new(root.clone(), 1, Some((0, idx))));
            tree.nodes[0].children.push(e);
        }
        tree.nodes[0].expanded = true;
        tree
    }

    #[test]
    fn select_examples() {
        let t = tree_with(vec![edge(1.0, 1, 0.1, "b"), edge(0.0, 0, 0.9, "a")]);
        assert_eq!(select(&t, 0, 1.0), Ok(0));
        let t = tree_with(vec![edge(0.0, 0, 0.5, "b"), edge(0.0, 0, 0.5, "a")]);
        assert_eq!(select(&t, 0, 1.0), Ok(1));
        let mut t = tree_with(vec![edge(0.0, 0, 1.0, "a")]);
        assert_eq!(select(&t, 0, 1.0), Ok(0));
        t.nodes[1].terminal = Terminal::Failed;
        assert_eq!(select(&t, 0, 1.0), Err(NoViableChild));
    }

    #[test]
    fn backprop_arithmetic() {
        let mut es = [edge(0.0, 0, 0.3, "a"), edge(0.0, 0, 0.3, "b"), edge(0.0, 0, 0.4, "c")];
        backpropagate(es.iter_mut(), 1.0);
        assert!(es.iter().all(|e| e.n == 1 && e.w == 1.0 && e.q == 1.0));
        let mut e = edge(0.0, 0, 1.0, "a");
        backpropagate(std::iter::once(&mut e), 1.0);
        backpropagate(std::iter::once(&mut e), -1.0);
        assert_eq!((e.n, e.w, e.q), (2, 0.0, 0.0));
        backpropagate(std::iter::empty(), 1.0);
    }

    fn start(goal: &str) -> P3 {
        let thm = TheoremRecord::seed("g", vec![Premise::new("x", "ℕ"), Premise::new("y", "ℕ")], goal, vec![]);
        let init = MockProver::default().get_init_state(&thm).unwrap();
        P3::at_root(thm, init)
    }

    fn search(goal: &str, limits: &SearchLimits) -> SearchResult {
        let sugg = RuleSuggester::new(RuleTable::default());
        let mut prover = MockProver::default();
        let mut ctx = SearchContext {
            suggester: &sugg,
            prover: &mut prover,
            guidance: None,
            limits,
        };
        run_search(&start(goal), &mut ctx).unwrap()
    }

    #[test]
    fn finds_two_step_proof() {
        let res = search("x + y + 0 = y + x", &SearchLimits::default());
        assert!(!res.proofs.is_empty());
        for proof in &res.proofs {
            let thm = TheoremRecord {
                proof: proof.tactics.clone(),
                ..start("x + y + 0 = y + x").root
            };
            let v = MockProver::default().is_correct_and_finished(&thm).unwrap();
            assert!(v.correct && v.finished);
        }
        assert!(!res.visited_pairs.is_empty());
    }

    #[test]
    fn false_goal_yields_candidate_paths() {
        let res = search("x + 0 = x + 1", &SearchLimits::default());
        assert!(res.proofs.is_empty());
        assert!(!res.candidate_paths.is_empty());
        assert!(res.candidate_paths.len() <= 16);
        let root = start("x + 0 = x + 1").root;
        for cp in &res.candidate_paths {
            assert!(!cp.predicted.is_empty());
            let mut p = MockProver::default();
            let mut s = p.get_init_state(&root).unwrap();
            for t in &cp.predicted {
                s = p.run_tactic(&s, t).unwrap();
            }
            assert_eq!(s.goals, cp.leaf_goals);
        }
    }

    #[test]
    fn zero_budget_returns_root_only() {
        let limits = SearchLimits {
            time_budget_secs: 0.0,
            ..SearchLimits::default()
        };
        let res = search("x + 0 = x", &limits);
        assert!(res.proofs.is_empty() && res.candidate_paths.is_empty());
        assert_eq!(res.tree.unwrap().nodes.len(), 1);
    }

    #[test]
    fn root_visits_match_passes() {
        let limits = SearchLimits {
            simulations_per_decision: 30,
            max_depth: 3,
            ..SearchLimits::default()
        };
        let res = search("x * y = x + y", &limits);
        let tree = res.tree.unwrap();
        assert_eq!(tree.nodes[0].visit_sum() as usize, res.root_passes);
        for node in &tree.nodes {
            for e in &node.children {
                assert!((-1.0..=1.0).contains(&e.q));
            }
        }
    }

    #[test]
    fn training_schedule_runs() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = GuidanceModel::new(&mut rng);
        let limits = SearchLimits {
            train_iterations: 2,
            events_per_iteration: 2,
            simulations_per_decision: 10,
            ..SearchLimits::default()
        };
        let sugg = RuleSuggester::new(RuleTable::default());
        let starts = vec![start("x + 0 = x"), start("x + 1 = x")];
        let sizes = train_guidance(&mut model, &starts, &sugg, &mut MockProver::default(), &limits, &mut rng).unwrap();
        assert_eq!(sizes.len(), 2);
        assert!(sizes.iter().all(|&n| n > 0));
    }
}
