use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use atgforge::corpus::eval_testset;
use atgforge::extract::{extract_corpus, P3};
use atgforge::pipeline::{
    build_suggester, compute_stats, generate_pass, load_seeds, load_theorems, open_prover, render_histograms,
    render_table, rule_table, run_until, validate_pass, IterationLedger, PipelineConfig, PipelineError, ProverKind,
};
use atgforge::record::{read_jsonl, read_records, write_atomic, write_jsonl, StateTacticPair};
use atgforge::search::GuidanceModel;
use atgforge::suggest::TacticSuggester;

#[derive(Parser)]
#[command(name = "atgforge", version, about = "Theorem generation from partial proof paths")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// mock | lean
    #[arg(long, global = true)]
    prover: Option<ProverKind>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay seeds; write partial proof paths and state-tactic pairs.
    Extract {
        /// Seed records (JSON-Lines) or a directory of .lean files.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// One search-and-synthesis pass over extracted paths.
    Generate {
        #[arg(long)]
        p3s: PathBuf,
        /// Pairs to warm the suggester with.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        guidance: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        iteration: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dedup, classify and repair candidate theorems.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Root theorems for type repairs; the configured seeds by default.
        #[arg(long)]
        roots: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Pass@1 best-first evaluation.
    Evaluate {
        #[arg(long)]
        testset: Option<PathBuf>,
        /// Pairs to warm the suggester with; the seed pairs by default.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        wall_time: Option<f64>,
    },
    /// Print the statistics table of a finished run.
    Stats {
        #[arg(long)]
        json: bool,
    },
    /// The full generation loop.
    Run {
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Stop after the named stage, as if killed there.
        #[arg(long, hide = true)]
        halt_after: Option<String>,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.prover {
        cfg.prover = p;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

fn or_out(path: &Option<PathBuf>, cfg: &PipelineConfig, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| cfg.out_dir.join(name))
}

fn warm(suggester: &mut dyn TacticSuggester, pairs: &Option<PathBuf>) -> Result<(), PipelineError> {
    if let Some(p) = pairs {
        suggester.refresh(&read_jsonl::<StateTacticPair>(p)?);
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    write_atomic(path, serde_json::to_string_pretty(v).expect("serializable").as_bytes())?;
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = config(&cli)?;
    match &cli.command {
        Command::Extract { input, out, pairs } => {
            cfg.check()?;
            let rules = rule_table(&cfg)?;
            let seeds = match input {
                Some(p) => load_theorems(p)?,
                None => load_seeds(&cfg)?,
            };
            let mut prover = open_prover(&cfg, &rules)?;
            let ex = extract_corpus(&seeds, &mut prover)?;
            write_jsonl(&or_out(out, &cfg, "p3s.jsonl"), &ex.p3s)?;
            write_jsonl(&or_out(pairs, &cfg, "pairs.jsonl"), &ex.pairs)?;
            eprintln!("{} seeds, {} skipped, {} P3s, {} pairs", seeds.len(), ex.skipped.len(), ex.p3s.len(), ex.pairs.len());
        }
        Command::Generate {
            p3s,
            pairs,
            guidance,
            iteration,
            out,
        } => {
            cfg.check()?;
            let rules = rule_table(&cfg)?;
            open_prover(&cfg, &rules)?;
            let p3s: Vec<P3> = read_jsonl(p3s)?;
            let mut suggester = build_suggester(&cfg, &rules);
            warm(&mut suggester, pairs)?;
            let model = guidance.as_deref().map(GuidanceModel::load).transpose()?;
            let (records, _, summary) = generate_pass(&cfg, &rules, &p3s, &suggester, model.as_ref(), *iteration)?;
            write_jsonl(&or_out(out, &cfg, "candidates.jsonl"), &records)?;
            print_json(&summary);
        }
        Command::Validate {
            input,
            out,
            rejects,
            stats,
            roots,
            pairs,
        } => {
            cfg.check()?;
            let rules = rule_table(&cfg)?;
            open_prover(&cfg, &rules)?;
            let candidates = read_records(input)?;
            let roots = match roots {
                Some(p) => load_theorems(p)?,
                None => load_seeds(&cfg)?,
            };
            let roots: HashMap<_, _> = roots.into_iter().map(|r| (r.name.clone(), r)).collect();
            let mut suggester = build_suggester(&cfg, &rules);
            warm(&mut suggester, pairs)?;
            let (report, _) = validate_pass(&cfg, &rules, candidates, &suggester, &roots)?;
            write_jsonl(&or_out(out, &cfg, "dataset.jsonl"), &report.accepted)?;
            write_jsonl(&or_out(rejects, &cfg, "rejects.jsonl"), &report.rejects)?;
            write_json(&or_out(stats, &cfg, "stats.json"), &report.stats)?;
            print_json(&report.stats);
        }
        Command::Evaluate {
            testset,
            pairs,
            width,
            wall_time,
        } => {
            if let Some(w) = width {
                cfg.eval.width = *w;
            }
            if let Some(t) = wall_time {
                cfg.eval.wall_time_secs = *t;
            }
            if let Some(t) = testset {
                cfg.eval.testset = Some(t.clone());
            }
            cfg.check()?;
            let tests = match &cfg.eval.testset {
                Some(p) => load_theorems(p)?,
                None => eval_testset(),
            };
            let warm_pairs = match pairs {
                Some(p) => read_jsonl(p)?,
                None => {
                    let rules = rule_table(&cfg)?;
                    let mut prover = open_prover(&cfg, &rules)?;
                    extract_corpus(&load_seeds(&cfg)?, &mut prover)?.pairs
                }
            };
            let report = atgforge::pipeline::evaluate_with_config(&cfg, &tests, &warm_pairs)?;
            print_json(&report);
        }
        Command::Stats { json } => {
            let ledger = IterationLedger::load(&cfg.out_dir)?;
            let report = compute_stats(&ledger);
            if *json {
                print_json(&report);
            } else {
                print!("{}", render_table(&report));
                println!("\nE*: {}\n\nprediction steps", report.e_star);
                print!("{}", render_histograms(&report.total));
            }
        }
        Command::Run {
            max_iterations,
            halt_after,
        } => {
            if let Some(n) = max_iterations {
                cfg.max_iterations = *n;
            }
            let ledger = run_until(&cfg, halt_after.as_deref())?;
            print!("{}", render_table(&compute_stats(&ledger)));
            println!("E*: {} records in {}", ledger.e_star.len(), cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
