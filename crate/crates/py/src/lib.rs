//! Python bindings for atgforge. Records cross the boundary as
//! `TheoremRecord` objects; everything else as plain values or JSON text.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use atgforge::corpus;
use atgforge::extract::extract_corpus;
use atgforge::pipeline::{
    build_suggester, compute_stats, evaluate_with_config, generate_pass, open_prover, rule_table, run_atg4ci, validate_pass,
    PipelineConfig, PipelineError,
};
use atgforge::prover::{MockProver, Prover};
use atgforge::record::{decode_record, encode_record, Premise, TacticStep, TheoremRecord};
use atgforge::search::{puct_score as core_puct, ChildEdge};
use atgforge::suggest::TacticSuggester;
use atgforge::validate::{self as checks, RepairNodeStats};

fn runtime<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Config(_) => PyValueError::new_err(e.to_string()),
        other => runtime(other),
    }
}

fn json_text<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Defaults unless a JSON config is given.
fn config(config_json: Option<&str>) -> PyResult<PipelineConfig> {
    match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("bad config: {e}"))),
        None => Ok(PipelineConfig::default()),
    }
}

#[pyclass(name = "TheoremRecord", module = "atgforge_py", from_py_object)]
#[derive(Clone)]
struct PyTheorem {
    inner: TheoremRecord,
}

impl From<TheoremRecord> for PyTheorem {
    fn from(inner: TheoremRecord) -> Self {
        Self { inner }
    }
}

fn unwrap_all(records: Vec<PyTheorem>) -> Vec<TheoremRecord> {
    records.into_iter().map(|r| r.inner).collect()
}

fn wrap_all(records: Vec<TheoremRecord>) -> Vec<PyTheorem> {
    records.into_iter().map(PyTheorem::from).collect()
}

#[pymethods]
impl PyTheorem {
    #[new]
    #[pyo3(signature = (name, goal, proof, premises = Vec::new()))]
    fn new(name: &str, goal: &str, proof: Vec<String>, premises: Vec<(String, String)>) -> PyResult<Self> {
        let proof = proof
            .iter()
            .map(|t| TacticStep::new(t).map_err(|_| PyValueError::new_err("empty tactic")))
            .collect::<PyResult<Vec<_>>>()?;
        let premises = premises.into_iter().map(|(n, t)| Premise::new(n, t)).collect();
        let inner = TheoremRecord::seed(name, premises, goal, proof);
        inner.check_invariants().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(line: &str) -> PyResult<Self> {
        decode_record(line).map(Self::from).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        encode_record(&self.inner).map_err(runtime)
    }

    fn to_lean(&self) -> String {
        self.inner.to_lean()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn goal(&self) -> &str {
        &self.inner.goal
    }

    #[getter]
    fn proof(&self) -> Vec<String> {
        self.inner.proof.iter().map(|t| t.text().to_string()).collect()
    }

    #[getter]
    fn premises(&self) -> Vec<(String, String)> {
        self.inner.premises.iter().map(|p| (p.name.clone(), p.type_expr.clone())).collect()
    }

    /// Name of the seed this record was grown from, if any.
    #[getter]
    fn root(&self) -> Option<String> {
        self.inner.provenance.as_ref().map(|p| p.root_name.clone())
    }

    #[getter]
    fn prediction_steps(&self) -> usize {
        self.inner.prediction_steps()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("TheoremRecord({:?}, {:?}, {} steps)", self.inner.name, self.inner.goal, self.inner.proof.len())
    }
}

/// The rewrite-system prover.
#[pyclass(name = "MockProver", module = "atgforge_py")]
struct PyMockProver {
    inner: MockProver,
}

#[pymethods]
impl PyMockProver {
    #[new]
    fn new() -> Self {
        Self {
            inner: MockProver::default(),
        }
    }

    /// `(complete, messages)` for the whole proof.
    fn verify(&mut self, theorem: &PyTheorem) -> PyResult<(bool, Vec<String>)> {
        let v = self.inner.is_correct_and_finished(&theorem.inner).map_err(runtime)?;
        Ok((v.correct && v.finished, v.messages.into_iter().map(|m| m.text).collect()))
    }

    /// Goals after each tactic; stops at the first error.
    fn replay(&mut self, theorem: &PyTheorem) -> PyResult<Vec<Vec<String>>> {
        let mut state = self.inner.get_init_state(&theorem.inner).map_err(runtime)?;
        let mut out = vec![state.goals.clone()];
        for step in &theorem.inner.proof {
            state = self.inner.run_tactic(&state, step).map_err(runtime)?;
            if state.error {
                return Err(PyValueError::new_err(format!(
                    "{}: {}",
                    step.text(),
                    state.first_error().unwrap_or("error")
                )));
            }
            out.push(state.goals.clone());
        }
        Ok(out)
    }

    /// One of `correct`, `incomplete`, `type_error`, `logical_error`,
    /// `redundant_steps`.
    fn classify(&mut self, theorem: &PyTheorem) -> PyResult<String> {
        let d = checks::classify(&theorem.inner, &mut self.inner).map_err(runtime)?;
        Ok(serde_json::to_value(d.verdict).expect("verdict").as_str().unwrap_or_default().to_string())
    }
}

#[pyfunction]
fn seed_theorems() -> Vec<PyTheorem> {
    wrap_all(corpus::seed_theorems())
}

#[pyfunction]
fn eval_testset() -> Vec<PyTheorem> {
    wrap_all(corpus::eval_testset())
}

/// Partial proof paths and state-tactic pairs as JSON lines, plus the
/// names of seeds that failed to replay.
#[pyfunction]
fn extract(theorems: Vec<PyTheorem>) -> PyResult<(Vec<String>, Vec<String>, Vec<String>)> {
    let ex = extract_corpus(&unwrap_all(theorems), &mut MockProver::default()).map_err(runtime)?;
    Ok((
        ex.p3s.iter().map(json_text).collect(),
        ex.pairs.iter().map(json_text).collect(),
        ex.skipped.into_iter().map(|(name, _)| name).collect(),
    ))
}

/// Search every partial path of the given seeds and synthesize candidate
/// theorems from the proofs and open leaves found.
#[pyfunction]
#[pyo3(signature = (theorems, config_json = None, iteration = 1))]
fn generate(py: Python<'_>, theorems: Vec<PyTheorem>, config_json: Option<&str>, iteration: usize) -> PyResult<Vec<PyTheorem>> {
    let cfg = config(config_json)?;
    cfg.check().map_err(pipeline_err)?;
    let seeds = unwrap_all(theorems);
    let records = py.detach(|| -> Result<_, PipelineError> {
        let rules = rule_table(&cfg)?;
        let ex = extract_corpus(&seeds, &mut open_prover(&cfg, &rules)?)?;
        let mut suggester = build_suggester(&cfg, &rules);
        suggester.refresh(&ex.pairs);
        let (records, _, _) = generate_pass(&cfg, &rules, &ex.p3s, &suggester, None, iteration)?;
        Ok(records)
    });
    records.map(wrap_all).map_err(pipeline_err)
}

/// `(unique, dropped)` by simplified goal and premises.
#[pyfunction]
fn dedup(theorems: Vec<PyTheorem>) -> (Vec<PyTheorem>, usize) {
    let (unique, dropped) = checks::dedup(unwrap_all(theorems));
    (wrap_all(unique), dropped)
}

/// Dedup, classify and repair; returns the accepted records and the
/// statistics as JSON. `roots` supplies the originals for type repairs.
#[pyfunction]
#[pyo3(signature = (candidates, roots = Vec::new(), config_json = None))]
fn validate(
    py: Python<'_>,
    candidates: Vec<PyTheorem>,
    roots: Vec<PyTheorem>,
    config_json: Option<&str>,
) -> PyResult<(Vec<PyTheorem>, String)> {
    let cfg = config(config_json)?;
    cfg.check().map_err(pipeline_err)?;
    let candidates = unwrap_all(candidates);
    let roots: HashMap<_, _> = unwrap_all(roots).into_iter().map(|r| (r.name.clone(), r)).collect();
    let report = py.detach(|| -> Result<_, PipelineError> {
        let rules = rule_table(&cfg)?;
        let suggester = build_suggester(&cfg, &rules);
        Ok(validate_pass(&cfg, &rules, candidates, &suggester, &roots)?.0)
    });
    let report = report.map_err(pipeline_err)?;
    Ok((wrap_all(report.accepted), json_text(&report.stats)))
}

/// Full loop into `out_dir`; returns the statistics report as JSON.
#[pyfunction]
#[pyo3(signature = (out_dir, max_iterations = None, seed = None, config_json = None))]
fn run_pipeline(
    py: Python<'_>,
    out_dir: PathBuf,
    max_iterations: Option<usize>,
    seed: Option<u64>,
    config_json: Option<&str>,
) -> PyResult<String> {
    let mut cfg = config(config_json)?;
    cfg.out_dir = out_dir;
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ledger = py.detach(|| run_atg4ci(&cfg)).map_err(pipeline_err)?;
    Ok(json_text(&compute_stats(&ledger)))
}

/// Pass@1 rate of best-first search on `testset` (the built-in test set
/// by default), with the suggester warmed on the seed pairs.
#[pyfunction]
#[pyo3(signature = (testset = None, width = 16, wall_time = 600.0))]
fn evaluate(py: Python<'_>, testset: Option<Vec<PyTheorem>>, width: usize, wall_time: f64) -> PyResult<f64> {
    let mut cfg = PipelineConfig::default();
    cfg.eval.width = width;
    cfg.eval.wall_time_secs = wall_time;
    cfg.check().map_err(pipeline_err)?;
    let tests = testset.map(unwrap_all).unwrap_or_else(corpus::eval_testset);
    let report = py.detach(|| -> Result<_, PipelineError> {
        let pairs = extract_corpus(&corpus::seed_theorems(), &mut MockProver::default())?.pairs;
        evaluate_with_config(&cfg, &tests, &pairs)
    });
    Ok(report.map_err(pipeline_err)?.rate)
}

/// Selection score of an edge with visit count `n`, mean value `q` and
/// prior `p` among siblings with `visit_sum` total visits.
#[pyfunction]
fn puct_score(q: f64, n: u32, p: f64, visit_sum: u32, c_puct: f64) -> f64 {
    let mut edge = ChildEdge::new(TacticStep::parse("skip"), p, 0, 0);
    edge.n = n;
    edge.q = q;
    core_puct(&edge, visit_sum, c_puct)
}

#[pyfunction]
#[pyo3(signature = (w, n, n_parent, c = std::f64::consts::SQRT_2))]
fn ucb1(w: f64, n: u32, n_parent: u32, c: f64) -> f64 {
    checks::ucb1(&RepairNodeStats { w, n, n_p: n_parent, c })
}

#[pymodule]
fn atgforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTheorem>()?;
    m.add_class::<PyMockProver>()?;
    m.add_function(wrap_pyfunction!(seed_theorems, m)?)?;
    m.add_function(wrap_pyfunction!(eval_testset, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(dedup, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(puct_score, m)?)?;
    m.add_function(wrap_pyfunction!(ucb1, m)?)?;
    Ok(())
}
