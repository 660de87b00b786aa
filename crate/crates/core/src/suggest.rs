//! Candidate-tactic sources: a rule-frequency table for the mock backend and
//! a remote text-generation client.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{rewrite_prop_first, Prop};
use crate::prover::{Goal, RuleTable, TacticCommand};
use crate::record::{normalize_text, write_jsonl, StateTacticPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTactic {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum SuggestError {
    #[error("remote suggester unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("completion contained no parseable `<tactic>, <score>` line")]
    EmptyCompletion,
}

pub trait TacticSuggester: Send + Sync {
    /// At most `t` candidates for the first goal, deduplicated and sorted by
    /// descending score.
    fn suggest(&self, goals: &[String], t: usize) -> Result<Vec<CandidateTactic>, SuggestError>;

    fn refresh(&mut self, pairs: &[StateTacticPair]);
}

/// Deduplicate by normalized text, keeping the best score, then order by
/// descending score with ties broken by text.
pub fn rank_candidates(cands: Vec<CandidateTactic>, t: usize) -> Vec<CandidateTactic> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for c in cands {
        let text = normalize_text(&c.text);
        if text.is_empty() || !c.score.is_finite() {
            continue;
        }
        let slot = best.entry(text).or_insert(f64::NEG_INFINITY);
        if c.score > *slot {
            *slot = c.score;
        }
    }
    let mut out: Vec<CandidateTactic> = best.into_iter().map(|(text, score)| CandidateTactic { text, score }).collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.text.cmp(&b.text)));
    out.truncate(t);
    out
}

// ---------------------------------------------------------------------------
// Prompt format

pub const PROMPT_HEADER: &str = "You are using Lean 4 for theorem proving. You are proving a theorem in Lean 4. \
Based on the current state of the theorem, provide the most reasonable proof tactic. \
Ensure your tactic is syntactically correct according to Lean 4's tactic syntax and effectively progresses the proof.";

pub fn format_prompt(goals: &[String]) -> String {
    format!("{PROMPT_HEADER}\n\n[Current State]:\n{}\n\n[Output Tactic]:\n", goals.join("\n\n"))
}

/// Parse `<tactic>, <score>` lines. Lines without a trailing numeric score
/// or with a positive log-likelihood are dropped.
pub fn parse_completion(reply: &str) -> Result<Vec<CandidateTactic>, SuggestError> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let Some((text, score)) = line.rsplit_once(',') else {
            continue;
        };
        let text = normalize_text(text);
        let Ok(score) = score.trim().parse::<f64>() else {
            continue;
        };
        if text.is_empty() || !score.is_finite() || score > 0.0 {
            continue;
        }
        out.push(CandidateTactic { text, score });
    }
    if out.is_empty() {
        return Err(SuggestError::EmptyCompletion);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub prompt: String,
    pub response: String,
}

/// Instruction records for live, error-free pairs, deduplicated by
/// `(prompt, response)` in first-seen order.
pub fn instruction_records(pairs: &[StateTacticPair]) -> Vec<InstructionRecord> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        if p.error || p.goals_before.is_empty() {
            continue;
        }
        let rec = InstructionRecord {
            prompt: format_prompt(&p.goals_before),
            response: p.pp.clone(),
        };
        if seen.insert((rec.prompt.clone(), rec.response.clone())) {
            out.push(rec);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Rule-frequency source

/// Sorted top-level operator symbols of both sides plus each side's head.
pub fn feature_key(goal: &str) -> String {
    let Ok(g) = Goal::parse(goal) else {
        return "?".into();
    };
    let mut ops = Vec::new();
    g.target.lhs.operator_symbols(&mut ops);
    g.target.rhs.operator_symbols(&mut ops);
    ops.sort();
    format!(
        "{}|{}|{}",
        ops.join(" "),
        g.target.lhs.head_symbol(),
        g.target.rhs.head_symbol()
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFrequencyTable {
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    smoothing: f64,
}

impl Default for RuleFrequencyTable {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl RuleFrequencyTable {
    pub fn new(smoothing: f64) -> Self {
        assert!(smoothing > 0.0, "smoothing must be positive");
        Self {
            counts: BTreeMap::new(),
            smoothing,
        }
    }

    pub fn count(&self, key: &str, tactic: &str) -> u64 {
        self.counts.get(key).and_then(|m| m.get(tactic)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, key: &str, tactic: &str, n: u64) {
        *self.counts.entry(key.to_string()).or_default().entry(tactic.to_string()).or_default() += n;
    }

    /// Log of the smoothed relative frequency of `tactic` under `key`, over
    /// a vocabulary of `vocab` tactics.
    pub fn score(&self, key: &str, tactic: &str, vocab: usize) -> f64 {
        let total: u64 = self.counts.get(key).map(|m| m.values().sum()).unwrap_or(0);
        let num = self.count(key, tactic) as f64 + self.smoothing;
        let den = total as f64 + self.smoothing * vocab.max(1) as f64;
        (num / den).ln()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// The deterministic desk-scale suggester. Candidates are drawn from the
/// rule table's tactic vocabulary plus tactics learned through refresh,
/// filtered to those whose first rewrite matches the goal.
#[derive(Debug, Clone)]
pub struct RuleSuggester {
    rules: Arc<RuleTable>,
    table: RuleFrequencyTable,
    learned: BTreeSet<String>,
}

impl RuleSuggester {
    pub fn new(rules: RuleTable) -> Self {
        Self::with_table(rules, RuleFrequencyTable::default())
    }

    pub fn with_table(rules: RuleTable, table: RuleFrequencyTable) -> Self {
        Self {
            rules: Arc::new(rules),
            table,
            learned: BTreeSet::new(),
        }
    }

    pub fn warmed(rules: RuleTable, pairs: &[StateTacticPair]) -> Self {
        let mut s = Self::new(rules);
        s.refresh(pairs);
        s
    }

    pub fn table(&self) -> &RuleFrequencyTable {
        &self.table
    }

    /// Every tactic this suggester may ever propose on `goal`, before
    /// applicability filtering.
    pub fn vocabulary(&self, goal: &Goal) -> Vec<String> {
        let mut out = self.rules.rewrite_tactics();
        out.extend(["simp", "rfl", "assumption"].map(String::from));
        for (h, _) in goal.prop_hyps() {
            for r in self.rules.rewrite_tactics() {
                out.push(format!("{r} at {h}"));
            }
            out.push(format!("simp at {h}"));
        }
        out.extend(self.learned.iter().cloned());
        out
    }

    fn applicable(&self, goal: &Goal, cmd: &TacticCommand) -> bool {
        let matches = |p: &Prop, name: &str, rev: bool| match self.rules.get(name) {
            Some(rule) => rewrite_prop_first(p, &|e| rule.apply_at(e, rev)).is_some(),
            None => false,
        };
        match cmd {
            TacticCommand::Rewrite { rules, at } => {
                let Some((name, rev)) = rules.first() else {
                    return false;
                };
                match at {
                    None => matches(&goal.target, name, *rev),
                    Some(h) => goal.hyp(h).and_then(|x| x.prop()).is_some_and(|p| matches(p, name, *rev)),
                }
            }
            TacticCommand::Simp { at: Some(h) } => goal.hyp(h).is_some_and(|x| x.prop().is_some()),
            TacticCommand::Rfl => goal.target.rel.reflexive(),
            TacticCommand::Assumption => goal.prop_hyps().next().is_some(),
            TacticCommand::Sorry => false,
            TacticCommand::Simp { at: None } | TacticCommand::Have { .. } => true,
        }
    }
}

impl TacticSuggester for RuleSuggester {
    fn suggest(&self, goals: &[String], t: usize) -> Result<Vec<CandidateTactic>, SuggestError> {
        let Some(first) = goals.first() else {
            return Ok(Vec::new());
        };
        let Ok(goal) = Goal::parse(first) else {
            return Ok(Vec::new());
        };
        let key = feature_key(first);
        let vocab = self.vocabulary(&goal);
        let size = vocab.len();
        let cands = vocab
            .into_iter()
            .filter(|text| TacticCommand::parse(text).is_ok_and(|cmd| self.applicable(&goal, &cmd)))
            .map(|text| CandidateTactic {
                score: self.table.score(&key, &normalize_text(&text), size),
                text,
            })
            .collect();
        Ok(rank_candidates(cands, t))
    }

    fn refresh(&mut self, pairs: &[StateTacticPair]) {
        for p in pairs {
            let Some(first) = p.goals_before.first() else {
                continue;
            };
            if p.error {
                continue;
            }
            let tactic = normalize_text(&p.pp);
            if TacticCommand::parse(&tactic).is_err() {
                continue;
            }
            self.table.add(&feature_key(first), &tactic, 1);
            if !self.rules.rewrite_tactics().contains(&tactic) && !matches!(tactic.as_str(), "simp" | "rfl" | "assumption") {
                self.learned.insert(tactic);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Remote source

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    n: usize,
    max_tokens: usize,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Inflight {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Inflight {
    fn acquire(&self) -> InflightGuard<'_> {
        let mut used = self.used.lock().expect("inflight lock");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("inflight lock");
        }
        *used += 1;
        InflightGuard(self)
    }
}

struct InflightGuard<'a>(&'a Inflight);

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("inflight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Client for a text-generation server taking `{prompt, n, max_tokens}`
/// and replying with `<tactic>, <score>` lines, either as the raw body or
/// under a `text` (string) or `completions` (list) key.
#[derive(Debug)]
pub struct RemoteSuggester {
    url: String,
    agent: ureq::Agent,
    max_tokens: usize,
    inflight: Inflight,
    export_path: Option<PathBuf>,
    refresh_hook: Option<Vec<String>>,
}

impl RemoteSuggester {
    pub fn new(url: &str, max_inflight: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            url: url.to_string(),
            agent,
            max_tokens: 64,
            inflight: Inflight {
                used: Mutex::new(0),
                freed: Condvar::new(),
                limit: max_inflight.max(1),
            },
            export_path: None,
            refresh_hook: None,
        }
    }

    /// Where refresh writes its instruction records, and the command run on
    /// that file afterwards (the path is appended as the last argument).
    pub fn with_refresh(mut self, export_path: PathBuf, hook: Option<Vec<String>>) -> Self {
        self.export_path = Some(export_path);
        self.refresh_hook = hook.filter(|h| !h.is_empty());
        self
    }

    fn request(&self, prompt: &str, t: usize) -> Result<String, SuggestError> {
        let body = serde_json::to_string(&CompletionRequest {
            prompt,
            n: t,
            max_tokens: self.max_tokens,
        })
        .expect("request serializes");
        let _slot = self.inflight.acquire();
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| SuggestError::RemoteUnavailable(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| SuggestError::RemoteUnavailable(e.to_string()))
    }
}

fn completion_text(body: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(body) {
        Ok(serde_json::Value::Object(map)) => {
            if let Some(serde_json::Value::String(text)) = map.get("text") {
                return text.clone();
            }
            if let Some(serde_json::Value::Array(items)) = map.get("completions") {
                return items.iter().filter_map(|v| v.as_str()).collect::<Vec<_>>().join("\n");
            }
            body.to_string()
        }
        _ => body.to_string(),
    }
}

impl TacticSuggester for RemoteSuggester {
    fn suggest(&self, goals: &[String], t: usize) -> Result<Vec<CandidateTactic>, SuggestError> {
        if goals.is_empty() {
            return Ok(Vec::new());
        }
        let body = self.request(&format_prompt(goals), t)?;
        Ok(rank_candidates(parse_completion(&completion_text(&body))?, t))
    }

    fn refresh(&mut self, pairs: &[StateTacticPair]) {
        if pairs.is_empty() {
            return;
        }
        let Some(path) = self.export_path.clone() else {
            return;
        };
        if let Err(e) = write_jsonl(&path, &instruction_records(pairs)) {
            log::warn!("fine-tune export to {} failed: {e}", path.display());
            return;
        }
        let Some(hook) = self.refresh_hook.clone() else {
            return;
        };
        let spawned = std::process::Command::new(&hook[0]).args(&hook[1..]).arg(&path).spawn();
        match spawned {
            Ok(mut child) => {
                std::thread::spawn(move || match child.wait() {
                    Ok(status) if !status.success() => log::warn!("refresh hook exited with {status}"),
                    Err(e) => log::warn!("refresh hook: {e}"),
                    _ => {}
                });
            }
            Err(e) => log::warn!("refresh hook `{}` failed to start: {e}", hook[0]),
        }
    }
}

/// Config-selected source; a remote source may fall back to rules.
#[derive(Debug)]
pub enum Suggester {
    Rules(RuleSuggester),
    Remote {
        remote: RemoteSuggester,
        fallback: Option<RuleSuggester>,
    },
}

impl TacticSuggester for Suggester {
    fn suggest(&self, goals: &[String], t: usize) -> Result<Vec<CandidateTactic>, SuggestError> {
        match self {
            Suggester::Rules(r) => r.suggest(goals, t),
            Suggester::Remote { remote, fallback } => match (remote.suggest(goals, t), fallback) {
                (Err(SuggestError::RemoteUnavailable(why)), Some(rules)) => {
                    log::warn!("remote suggester unavailable, using rules: {why}");
                    rules.suggest(goals, t)
                }
                (out, _) => out,
            },
        }
    }

    fn refresh(&mut self, pairs: &[StateTacticPair]) {
        match self {
            Suggester::Rules(r) => r.refresh(pairs),
            Suggester::Remote { remote, fallback } => {
                remote.refresh(pairs);
                if let Some(rules) = fallback {
                    rules.refresh(pairs);
                }
            }
        }
    }
}
