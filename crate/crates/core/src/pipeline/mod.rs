//! The generation loop: extract partial paths from the seeds, then per
//! iteration refresh the suggester, search and synthesize candidates,
//! validate them, and merge into the accumulated dataset E*.
//!
//! Every stage persists its outputs under `out_dir` and drops a `.done`
//! marker; a restarted run skips completed stages.

mod config;
mod eval;
mod lean_source;

pub use config::{EvalConfig, PipelineConfig, PoolConfig, ProverKind, SuggestConfig, SuggestSource};
pub use eval::{evaluate_pass1, prove_best_first, EvalOutcome, EvalReport, EvalSettings};
pub use lean_source::{parse_lean_source, read_lean_dir};

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{build_proof_tree, extract_corpus, extract_state_tactic_pairs, P3};
use crate::leanrepl::LeanRepl;
use crate::prover::{MockProver, Prover, ProverError, RuleTable};
use crate::record::{
    normalize_text, read_jsonl, read_records, write_atomic, write_jsonl, DatasetStats, JsonlError, StateTacticPair,
    TheoremRecord,
};
use crate::search::{run_search, train_guidance, GuidanceError, GuidanceModel, SearchContext, SearchError};
use crate::suggest::{instruction_records, RemoteSuggester, RuleFrequencyTable, RuleSuggester, Suggester, TacticSuggester};
use crate::synth::{make_candidate_theorem, proof_record, SynthError};
use crate::validate::{dedup, summarize, validate_one, verdict_counts, Reject, Validated, ValidationReport, Verdict};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("seed set: {0}")]
    Seeds(String),
    #[error(transparent)]
    Prover(#[from] ProverError),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("halted after stage {0}")]
    Halted(String),
}

impl PipelineError {
    /// 2 for configuration problems, 3 when the prover cannot be reached.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Prover(ProverError::BackendUnavailable(_)) => 3,
            _ => 1,
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io(JsonlError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Backends

pub type BoxedProver = Box<dyn Prover + Send>;

pub fn rule_table(cfg: &PipelineConfig) -> Result<RuleTable, PipelineError> {
    match &cfg.rules {
        Some(path) => RuleTable::load(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display()))),
        None => Ok(RuleTable::default()),
    }
}

pub fn open_prover(cfg: &PipelineConfig, rules: &RuleTable) -> Result<BoxedProver, PipelineError> {
    match cfg.prover {
        ProverKind::Mock => Ok(Box::new(
            MockProver::new(rules.clone()).with_check_budget(Duration::from_secs(cfg.lean.check_timeout_secs)),
        )),
        ProverKind::Lean => Ok(Box::new(LeanRepl::start(cfg.lean.clone()).map_err(ProverError::from)?)),
    }
}

pub fn build_suggester(cfg: &PipelineConfig, rules: &RuleTable) -> Suggester {
    let rule_source = || RuleSuggester::with_table(rules.clone(), RuleFrequencyTable::new(cfg.suggest.smoothing));
    match cfg.suggest.source {
        SuggestSource::Rules => Suggester::Rules(rule_source()),
        SuggestSource::Remote => {
            let url = cfg.suggest.remote_url.as_deref().unwrap_or_default();
            let remote = RemoteSuggester::new(url, cfg.suggest.max_inflight, Duration::from_secs(cfg.suggest.timeout_secs))
                .with_refresh(cfg.out_dir.join("finetune").join("refresh.jsonl"), cfg.suggest.refresh_hook.clone());
            Suggester::Remote {
                remote,
                fallback: cfg.suggest.fallback_to_rules.then(rule_source),
            }
        }
    }
}

/// JSON-Lines records, or every `.lean` file of a directory.
pub fn load_theorems(path: &Path) -> Result<Vec<TheoremRecord>, PipelineError> {
    if path.is_dir() {
        read_lean_dir(path).map_err(|e| PipelineError::Seeds(format!("{}: {e}", path.display())))
    } else {
        read_records(path).map_err(|e| PipelineError::Seeds(e.to_string()))
    }
}

pub fn load_seeds(cfg: &PipelineConfig) -> Result<Vec<TheoremRecord>, PipelineError> {
    let seeds = match &cfg.seeds {
        Some(path) => load_theorems(path)?,
        None => crate::corpus::seed_theorems(),
    };
    if seeds.is_empty() {
        return Err(PipelineError::Seeds("no seed theorems".into()));
    }
    Ok(seeds)
}

/// A generator for one (iteration, purpose) pair of the run seed.
pub fn stage_rng(seed: u64, iteration: usize, salt: u64) -> ChaCha8Rng {
    let mix = (iteration as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt.rotate_left(32);
    ChaCha8Rng::seed_from_u64(seed ^ mix)
}

// ---------------------------------------------------------------------------
// Worker pool

/// Map `f` over `items` on up to `workers` threads, each holding the state
/// built by `init` (one prover session per worker). Output order matches
/// input order.
pub fn par_map<T, R, S, E>(
    items: &[T],
    workers: usize,
    init: impl Fn() -> Result<S, E> + Sync,
    f: impl Fn(&mut S, &T) -> R + Sync,
) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
{
    let workers = workers.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let failure: Mutex<Option<E>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut state = match init() {
                    Ok(s) => s,
                    Err(e) => {
                        failure.lock().expect("unpoisoned").get_or_insert(e);
                        return;
                    }
                };
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= items.len() {
                        break;
                    }
                    let r = f(&mut state, &items[i]);
                    slots.lock().expect("unpoisoned")[i] = Some(r);
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("unpoisoned") {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .expect("unpoisoned")
        .into_iter()
        .map(|r| r.expect("every item mapped"))
        .collect())
}

// ---------------------------------------------------------------------------
// Generation

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub p3s: usize,
    pub replay_mismatches: usize,
    pub search_failures: usize,
    pub proofs_found: usize,
    pub candidate_paths: usize,
    pub non_transformable: usize,
    pub empty_predictions: usize,
    pub candidates: usize,
}

impl GenerationSummary {
    fn absorb(&mut self, o: &GenerationSummary) {
        self.p3s += o.p3s;
        self.replay_mismatches += o.replay_mismatches;
        self.search_failures += o.search_failures;
        self.proofs_found += o.proofs_found;
        self.candidate_paths += o.candidate_paths;
        self.non_transformable += o.non_transformable;
        self.empty_predictions += o.empty_predictions;
        self.candidates += o.candidates;
    }
}

/// Re-run the P3 prefix on this session so the tip state is live here.
fn live_tip<P: Prover + ?Sized>(p3: &P3, prover: &mut P) -> Result<Option<P3>, ProverError> {
    let mut state = prover.get_init_state(&p3.root)?;
    for step in &p3.prefix {
        state = prover.run_tactic(&state, step)?;
    }
    let norm = |goals: &[String]| goals.iter().map(|g| normalize_text(g)).collect::<Vec<_>>();
    if state.error || norm(&state.goals) != norm(&p3.tip_state.goals) {
        return Ok(None);
    }
    Ok(Some(P3 {
        tip_state: state,
        ..p3.clone()
    }))
}

#[derive(Debug, Default)]
struct GenOut {
    records: Vec<TheoremRecord>,
    pairs: Vec<StateTacticPair>,
    summary: GenerationSummary,
}

fn generate_one<P: Prover + ?Sized>(
    p3: &P3,
    iteration: usize,
    prover: &mut P,
    suggester: &dyn TacticSuggester,
    guidance: Option<&GuidanceModel>,
    cfg: &PipelineConfig,
) -> GenOut {
    let mut out = GenOut::default();
    out.summary.p3s = 1;
    let live = match live_tip(p3, prover) {
        Ok(Some(p)) => p,
        Ok(None) => {
            log::warn!("{}: prefix no longer reaches the recorded tip", p3.path_id);
            out.summary.replay_mismatches = 1;
            return out;
        }
        Err(e) => {
            log::warn!("{}: {e}", p3.path_id);
            out.summary.search_failures = 1;
            return out;
        }
    };
    let mut limits = cfg.search.clone();
    limits.max_candidates = limits.max_candidates.min(cfg.suggest.t).max(1);
    let mut ctx = SearchContext {
        suggester: &TopT {
            inner: suggester,
            t: cfg.suggest.t,
        },
        prover,
        guidance,
        limits: &limits,
    };
    let started = std::time::Instant::now();
    let result = match run_search(&live, &mut ctx) {
        Ok(r) => {
            log::debug!("{}: {} simulations in {:?}", p3.path_id, r.simulations, started.elapsed());
            r
        }
        Err(e) => {
            log::warn!("{}: search failed: {e}", p3.path_id);
            out.summary.search_failures = 1;
            return out;
        }
    };
    let stem = format!("{}_g{iteration}_p{}", p3.root.name, p3.prefix.len());
    for (k, found) in result.proofs.iter().enumerate() {
        let path_id = format!("{}/proof{k}", p3.path_id);
        out.records.push(proof_record(&p3.root, found, &path_id, &format!("{stem}_proof{k}")));
    }
    out.summary.proofs_found = result.proofs.len();
    out.summary.candidate_paths = result.candidate_paths.len();
    for (k, cp) in result.candidate_paths.iter().enumerate() {
        match make_candidate_theorem(&p3.root, cp, &format!("{stem}_c{k}")) {
            Ok(t) => out.records.push(t),
            Err(SynthError::NonTransformablePath { .. }) => out.summary.non_transformable += 1,
            Err(_) => out.summary.empty_predictions += 1,
        }
    }
    out.summary.candidates = out.records.len();
    out.pairs = result.visited_pairs.into_iter().filter(|p| !p.error).collect();
    out
}

/// Caps the suggester at the configured `t` whatever the search asks for.
struct TopT<'a> {
    inner: &'a dyn TacticSuggester,
    t: usize,
}

impl TacticSuggester for TopT<'_> {
    fn suggest(&self, goals: &[String], t: usize) -> Result<Vec<crate::suggest::CandidateTactic>, crate::suggest::SuggestError> {
        self.inner.suggest(goals, t.min(self.t))
    }
    fn refresh(&mut self, _pairs: &[StateTacticPair]) {}
}

/// One generation pass over `p3s`: search from each tip, keep proofs and
/// synthesize candidate theorems from unfinished paths (G_i).
pub fn generate_pass(
    cfg: &PipelineConfig,
    rules: &RuleTable,
    p3s: &[P3],
    suggester: &dyn TacticSuggester,
    guidance: Option<&GuidanceModel>,
    iteration: usize,
) -> Result<(Vec<TheoremRecord>, Vec<StateTacticPair>, GenerationSummary), PipelineError> {
    let outs = par_map(
        p3s,
        cfg.pipeline.workers,
        || open_prover(cfg, rules),
        |prover, p3| generate_one(p3, iteration, prover, suggester, guidance, cfg),
    )?;
    let mut records = Vec::new();
    let mut pairs = Vec::new();
    let mut summary = GenerationSummary::default();
    for o in outs {
        records.extend(o.records);
        pairs.extend(o.pairs);
        summary.absorb(&o.summary);
    }
    Ok((records, pairs, summary))
}

// ---------------------------------------------------------------------------
// Validation

/// Dedup, then classify and repair on the worker pool (G_i → G_i*).
/// Also returns the state-tactic pairs of every accepted proof.
pub fn validate_pass(
    cfg: &PipelineConfig,
    rules: &RuleTable,
    candidates: Vec<TheoremRecord>,
    suggester: &dyn TacticSuggester,
    roots: &HashMap<String, TheoremRecord>,
) -> Result<(ValidationReport, Vec<StateTacticPair>), PipelineError> {
    let n = candidates.len();
    let (unique, _) = dedup(candidates);
    let outcomes = par_map(
        &unique,
        cfg.pipeline.workers,
        || open_prover(cfg, rules),
        |prover, record| {
            validate_one(record, prover, suggester, roots, &cfg.repair).unwrap_or_else(|e| {
                Validated::Rejected(Reject {
                    record: record.clone(),
                    verdict: Verdict::Unrepairable,
                    messages: vec![e.to_string()],
                })
            })
        },
    )?;
    let report = summarize(n, &unique, outcomes);
    let pair_sets = par_map(
        &report.accepted,
        cfg.pipeline.workers,
        || open_prover(cfg, rules),
        |prover, record| match build_proof_tree(record, prover) {
            Ok(tree) => extract_state_tactic_pairs(&tree),
            Err(e) => {
                log::warn!("{}: {e}", record.name);
                Vec::new()
            }
        },
    )?;
    Ok((report, pair_sets.into_iter().flatten().collect()))
}

// ---------------------------------------------------------------------------
// Ledger and statistics

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    /// 1-based.
    pub iteration: usize,
    pub generation: GenerationSummary,
    pub stats: DatasetStats,
    pub rejects: BTreeMap<Verdict, usize>,
    pub e_star_size: usize,
    /// G_i.
    #[serde(skip)]
    pub candidates: Vec<TheoremRecord>,
    /// G_i*.
    #[serde(skip)]
    pub validated: Vec<TheoremRecord>,
    /// Live pairs visited by search and pairs of accepted proofs.
    #[serde(skip)]
    pub pairs: Vec<StateTacticPair>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLedger {
    pub seeds: usize,
    pub p3s: usize,
    pub skipped_seeds: Vec<(String, String)>,
    pub iterations: Vec<IterationEntry>,
    #[serde(skip)]
    pub e_star: Vec<TheoremRecord>,
}

const LEDGER_FILE: &str = "ledger.json";
const E_STAR_FILE: &str = "e_star.jsonl";
const STATS_FILE: &str = "stats.json";

fn iter_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("iter_{k}"))
}

impl IterationLedger {
    /// Read a finished run back from its output directory.
    pub fn load(out_dir: &Path) -> Result<Self, PipelineError> {
        let path = out_dir.join(LEDGER_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let mut ledger: IterationLedger =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        for entry in &mut ledger.iterations {
            let dir = iter_dir(out_dir, entry.iteration);
            entry.candidates = read_records(&dir.join("candidates.jsonl"))?;
            entry.validated = read_records(&dir.join("validated.jsonl"))?;
            entry.pairs = read_jsonl(&dir.join("search_pairs.jsonl"))?;
            entry.pairs.extend(read_jsonl::<StateTacticPair>(&dir.join("validated_pairs.jsonl"))?);
        }
        ledger.e_star = read_records(&out_dir.join(E_STAR_FILE))?;
        Ok(ledger)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub iterations: Vec<IterationStats>,
    pub total: DatasetStats,
    pub e_star: usize,
}

pub fn compute_stats(ledger: &IterationLedger) -> StatsReport {
    let iterations: Vec<IterationStats> = ledger
        .iterations
        .iter()
        .map(|e| IterationStats {
            iteration: e.iteration,
            stats: e.stats.clone(),
        })
        .collect();
    let total = iterations
        .iter()
        .fold(DatasetStats::default(), |acc, s| acc.merged(&s.stats));
    StatsReport {
        iterations,
        total,
        e_star: ledger.iterations.last().map_or(0, |e| e.e_star_size),
    }
}

/// The per-iteration and total counts as a text table.
pub fn render_table(report: &StatsReport) -> String {
    let mut cols: Vec<(String, &DatasetStats)> = report
        .iterations
        .iter()
        .map(|s| (format!("iter {}", s.iteration), &s.stats))
        .collect();
    cols.push(("total".into(), &report.total));
    let rows: [(&str, fn(&DatasetStats) -> u64); 5] = [
        ("# Candidate", DatasetStats::n_candidate),
        ("# Deduplicated", DatasetStats::n_deduplicated),
        ("# Correct", DatasetStats::n_correct),
        ("# Corrected", DatasetStats::n_corrected),
        ("# New (Subtotal)", DatasetStats::n_new),
    ];
    let mut out = format!("{:<18}", "");
    for (name, _) in &cols {
        out.push_str(&format!("{name:>12}"));
    }
    out.push('\n');
    for (label, get) in rows {
        out.push_str(&format!("{label:<18}"));
        for (_, s) in &cols {
            out.push_str(&format!("{:>12}", get(s)));
        }
        out.push('\n');
    }
    out
}

/// Prediction-step histograms of the totals, one line per category.
pub fn render_histograms(stats: &DatasetStats) -> String {
    let mut out = String::new();
    for cat in crate::record::StatCategory::ALL {
        let cells: Vec<String> = stats
            .histogram(cat)
            .iter()
            .map(|(steps, n)| format!("{steps}:{n}"))
            .collect();
        out.push_str(&format!("{:<14}{}\n", format!("{cat:?}").to_lowercase(), cells.join(" ")));
    }
    out
}

/// Instruction records for every live pair in the ledger. Returns the
/// number written.
pub fn export_finetune_data(ledger: &IterationLedger, path: &Path) -> Result<usize, PipelineError> {
    let pairs: Vec<StateTacticPair> = ledger.iterations.iter().flat_map(|e| e.pairs.iter().cloned()).collect();
    let records = instruction_records(&pairs);
    write_jsonl(path, &records)?;
    Ok(records.len())
}

// ---------------------------------------------------------------------------
// The loop

fn done(dir: &Path, stage: &str) -> bool {
    dir.join(format!("{stage}.done")).exists()
}

fn mark(dir: &Path, stage: &str) -> Result<(), PipelineError> {
    write_atomic(&dir.join(format!("{stage}.done")), b"")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        PipelineError::Io(JsonlError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    })
}

pub fn run_atg4ci(cfg: &PipelineConfig) -> Result<IterationLedger, PipelineError> {
    run_until(cfg, None)
}

/// Run the loop, stopping with [`PipelineError::Halted`] right after the
/// named stage (`extract`, `iter_K/guidance`, `iter_K/generate`,
/// `iter_K/validate`, `iter_K/merge`) has been persisted.
pub fn run_until(cfg: &PipelineConfig, halt: Option<&str>) -> Result<IterationLedger, PipelineError> {
    cfg.check()?;
    let rules = rule_table(cfg)?;
    let seeds = load_seeds(cfg)?;
    let mut prover = open_prover(cfg, &rules)?;
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let stop = |stage: String| -> Result<(), PipelineError> {
        match halt {
            Some(h) if h == stage => Err(PipelineError::Halted(stage)),
            _ => Ok(()),
        }
    };

    let ex_dir = out.join("extract");
    let (p3s, seed_pairs, skipped) = if done(&ex_dir, "extract") {
        (
            read_jsonl::<P3>(&ex_dir.join("p3s.jsonl"))?,
            read_jsonl::<StateTacticPair>(&ex_dir.join("pairs.jsonl"))?,
            read_json::<Vec<(String, String)>>(&ex_dir.join("skipped.json"))?,
        )
    } else {
        let ex = extract_corpus(&seeds, &mut prover)?;
        write_jsonl(&ex_dir.join("p3s.jsonl"), &ex.p3s)?;
        write_jsonl(&ex_dir.join("pairs.jsonl"), &ex.pairs)?;
        write_json(&ex_dir.join("skipped.json"), &ex.skipped)?;
        mark(&ex_dir, "extract")?;
        (ex.p3s, ex.pairs, ex.skipped)
    };
    stop("extract".into())?;

    let roots: HashMap<String, TheoremRecord> = seeds.iter().map(|s| (s.name.clone(), s.clone())).collect();
    let mut suggester = build_suggester(cfg, &rules);
    let mut ledger = IterationLedger {
        seeds: seeds.len(),
        p3s: p3s.len(),
        skipped_seeds: skipped,
        ..Default::default()
    };
    let mut refresh_pairs = seed_pairs;
    let mut e_star: Vec<TheoremRecord> = Vec::new();
    let mut model: Option<GuidanceModel> = None;

    for i in 0..cfg.passes() {
        let k = i + 1;
        let dir = iter_dir(out, k);
        suggester.refresh(&refresh_pairs);

        if cfg.pipeline.train_guidance {
            let path = dir.join("guidance.bin");
            let trained = if path.exists() {
                GuidanceModel::load(&path)?
            } else {
                let mut rng = stage_rng(cfg.seed, i, 1);
                let mut m = model.take().unwrap_or_else(|| GuidanceModel::new(&mut rng));
                let mut starts = Vec::new();
                for p3 in &p3s {
                    starts.extend(live_tip(p3, &mut prover)?);
                }
                train_guidance(&mut m, &starts, &suggester, &mut prover, &cfg.search, &mut rng)?;
                m.save(&path)?;
                m
            };
            model = Some(trained);
            stop(format!("iter_{k}/guidance"))?;
        }

        let (candidates, search_pairs, generation) = if done(&dir, "generate") {
            (
                read_records(&dir.join("candidates.jsonl"))?,
                read_jsonl(&dir.join("search_pairs.jsonl"))?,
                read_json(&dir.join("generation.json"))?,
            )
        } else {
            let (c, p, g) = generate_pass(cfg, &rules, &p3s, &suggester, model.as_ref(), k)?;
            write_jsonl(&dir.join("candidates.jsonl"), &c)?;
            write_jsonl(&dir.join("search_pairs.jsonl"), &p)?;
            write_json(&dir.join("generation.json"), &g)?;
            mark(&dir, "generate")?;
            (c, p, g)
        };
        stop(format!("iter_{k}/generate"))?;

        let (validated, rejects, stats, validated_pairs) = if done(&dir, "validate") {
            (
                read_records(&dir.join("validated.jsonl"))?,
                read_jsonl::<Reject>(&dir.join("rejects.jsonl"))?,
                read_json::<DatasetStats>(&dir.join("stats.json"))?,
                read_jsonl::<StateTacticPair>(&dir.join("validated_pairs.jsonl"))?,
            )
        } else {
            let (report, vp) = validate_pass(cfg, &rules, candidates.clone(), &suggester, &roots)?;
            write_jsonl(&dir.join("validated.jsonl"), &report.accepted)?;
            write_jsonl(&dir.join("rejects.jsonl"), &report.rejects)?;
            write_json(&dir.join("stats.json"), &report.stats)?;
            write_jsonl(&dir.join("validated_pairs.jsonl"), &vp)?;
            mark(&dir, "validate")?;
            (report.accepted, report.rejects, report.stats, vp)
        };
        stop(format!("iter_{k}/validate"))?;

        e_star = if done(&dir, "merge") {
            read_records(&dir.join(E_STAR_FILE))?
        } else {
            let mut merged = e_star;
            merged.extend(validated.iter().cloned());
            let (merged, _) = dedup(merged);
            write_jsonl(&dir.join(E_STAR_FILE), &merged)?;
            mark(&dir, "merge")?;
            merged
        };
        stop(format!("iter_{k}/merge"))?;

        let mut pairs = search_pairs;
        pairs.extend(validated_pairs.iter().cloned());
        ledger.iterations.push(IterationEntry {
            iteration: k,
            generation,
            stats,
            rejects: verdict_counts(&rejects),
            e_star_size: e_star.len(),
            candidates,
            validated,
            pairs,
        });
        // the next iteration refreshes on this one's validated output
        refresh_pairs = validated_pairs;
    }

    ledger.e_star = e_star;
    write_jsonl(&out.join(E_STAR_FILE), &ledger.e_star)?;
    write_json(&out.join(STATS_FILE), &compute_stats(&ledger))?;
    write_json(&out.join(LEDGER_FILE), &ledger)?;
    export_finetune_data(&ledger, &out.join("finetune").join("instructions.jsonl"))?;
    Ok(ledger)
}

/// Pass@1 over a testset using a rule suggester warmed on `pairs`.
pub fn evaluate_with_config(
    cfg: &PipelineConfig,
    testset: &[TheoremRecord],
    pairs: &[StateTacticPair],
) -> Result<EvalReport, PipelineError> {
    let rules = rule_table(cfg)?;
    let mut prover = open_prover(cfg, &rules)?;
    let mut suggester = build_suggester(cfg, &rules);
    suggester.refresh(pairs);
    let settings = EvalSettings {
        wall_time: Duration::from_secs_f64(cfg.eval.wall_time_secs),
        width: cfg.eval.width,
        max_expansions: cfg.eval.max_expansions,
        max_depth: cfg.eval.max_depth,
    };
    Ok(evaluate_pass1(testset, &mut prover, &suggester, &settings)?)
}
