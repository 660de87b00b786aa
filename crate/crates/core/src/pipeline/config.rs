use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::leanrepl::LeanConfig;
use crate::search::SearchLimits;
use crate::validate::RepairLimits;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProverKind {
    #[default]
    Mock,
    Lean,
}

impl std::str::FromStr for ProverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProverKind::Mock),
            "lean" => Ok(ProverKind::Lean),
            other => Err(format!("unknown prover `{other}` (expected mock or lean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuggestSource {
    #[default]
    Rules,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuggestConfig {
    pub source: SuggestSource,
    pub t: usize,
    pub remote_url: Option<String>,
    pub max_inflight: usize,
    pub timeout_secs: u64,
    /// Fall back to the rule source when the remote one is unreachable.
    pub fallback_to_rules: bool,
    pub smoothing: f64,
    /// Command run on the exported instruction file after each refresh.
    pub refresh_hook: Option<Vec<String>>,
}

impl Default for SuggestConfig {
    fn default() -> Self {
        Self {
            source: SuggestSource::Rules,
            t: 16,
            remote_url: None,
            max_inflight: 4,
            timeout_secs: 30,
            fallback_to_rules: true,
            smoothing: 1.0,
            refresh_hook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub wall_time_secs: f64,
    pub width: usize,
    pub max_expansions: usize,
    pub max_depth: usize,
    /// Statement-only JSON-Lines; the built-in testset when absent.
    pub testset: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            wall_time_secs: 600.0,
            width: 16,
            max_expansions: 2000,
            max_depth: 16,
            testset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub workers: usize,
    /// Train the critic/policy pair at the start of every iteration.
    pub train_guidance: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            train_guidance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Refresh cycles; `0` and `1` both run a single generation pass.
    pub max_iterations: usize,
    pub seed: u64,
    pub prover: ProverKind,
    /// Seed set as JSON-Lines; the built-in corpus when absent.
    pub seeds: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Extra mock rules, merged over the default table.
    pub rules: Option<PathBuf>,
    pub suggest: SuggestConfig,
    pub search: SearchLimits,
    pub repair: RepairLimits,
    pub eval: EvalConfig,
    pub lean: LeanConfig,
    pub pipeline: PoolConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2,
            seed: 0,
            prover: ProverKind::Mock,
            seeds: None,
            out_dir: PathBuf::from("atg_out"),
            rules: None,
            suggest: SuggestConfig::default(),
            search: SearchLimits::default(),
            repair: RepairLimits::default(),
            eval: EvalConfig::default(),
            lean: LeanConfig::default(),
            pipeline: PoolConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Generation passes actually run.
    pub fn passes(&self) -> usize {
        self.max_iterations.max(1)
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.suggest.t == 0 {
            return bad("suggest.t must be positive".into());
        }
        if self.suggest.max_inflight == 0 {
            return bad("suggest.max_inflight must be positive".into());
        }
        if self.suggest.source == SuggestSource::Remote && self.suggest.remote_url.is_none() {
            return bad("suggest.remote_url is required for the remote source".into());
        }
        if self.pipeline.workers == 0 {
            return bad("pipeline.workers must be positive".into());
        }
        if self.eval.width == 0 || self.eval.max_expansions == 0 || self.eval.max_depth == 0 {
            return bad("eval.width, max_expansions and max_depth must be positive".into());
        }
        if !(self.eval.wall_time_secs >= 0.0) {
            return bad("eval.wall_time_secs must be nonnegative".into());
        }
        if self.repair.candidates == 0 || self.repair.simulations == 0 || self.repair.max_depth == 0 {
            return bad("repair.candidates, simulations and max_depth must be positive".into());
        }
        self.search.check().map_err(PipelineError::Config)?;
        let mut paths: Vec<&Path> = vec![self.out_dir.as_path()];
        paths.extend(self.seeds.as_deref());
        paths.extend(self.rules.as_deref());
        paths.extend(self.eval.testset.as_deref());
        for (i, a) in paths.iter().enumerate() {
            if paths[..i].contains(a) {
                return bad(format!("path {} is used twice", a.display()));
            }
        }
        Ok(())
    }
}
