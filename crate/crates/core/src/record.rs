//! Domain records shared by every stage: theorem records, tactic steps,
//! state-tactic pairs and dataset statistics, plus canonical text
//! normalization and JSON-Lines (de)serialization.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Collapse whitespace runs to a single space, trim, and NFC-normalize.
pub fn normalize_text(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The text after the last turnstile of a pretty-printed goal, or the
/// whole text when the goal carries no hypothesis block.
pub fn goal_target(goal: &str) -> &str {
    match goal.rfind('⊢') {
        Some(idx) => goal[idx + '⊢'.len_utf8()..].trim(),
        None => goal.trim(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TacticKind {
    Rewrite,
    Simp,
    Have,
    Assumption,
    Rfl,
    Other,
}

impl TacticKind {
    fn from_leading_token(token: &str) -> Self {
        match token {
            "rw" | "rewrite" | "rwa" | "erw" => TacticKind::Rewrite,
            "simp" | "simp_all" | "dsimp" | "simp_arith" => TacticKind::Simp,
            "have" => TacticKind::Have,
            "assumption" => TacticKind::Assumption,
            "rfl" => TacticKind::Rfl,
            _ => TacticKind::Other,
        }
    }
}

/// One tactic of a proof. The kind is always derived from the text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TacticStep {
    text: String,
    kind: TacticKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("tactic text is empty")]
pub struct EmptyTactic;

impl TacticStep {
    pub fn new(text: impl AsRef<str>) -> Result<Self, EmptyTactic> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(EmptyTactic);
        }
        let lead: String = text
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        Ok(Self {
            text: text.to_string(),
            kind: TacticKind::from_leading_token(&lead),
        })
    }

    /// Panicking constructor for literals known to be nonempty.
    pub fn parse(text: &str) -> Self {
        Self::new(text).expect("nonempty tactic literal")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> TacticKind {
        self.kind
    }
}

impl fmt::Display for TacticStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for TacticStep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for TacticStep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        TacticStep::new(text).map_err(serde::de::Error::custom)
    }
}

/// Parse a list of tactic literals.
pub fn tactics(texts: &[&str]) -> Vec<TacticStep> {
    texts.iter().map(|t| TacticStep::parse(t)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Premise {
    pub name: String,
    #[serde(rename = "type")]
    pub type_expr: String,
}

impl Premise {
    pub fn new(name: impl Into<String>, type_expr: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            type_expr: type_expr.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Seed,
    Generated,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub root_name: String,
    pub path_id: String,
    /// Tactics appended by search, excluding the replayed prefix.
    pub prediction_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremRecord {
    pub name: String,
    #[serde(default)]
    pub imports: Vec<String>,
    #[serde(default)]
    pub premises: Vec<Premise>,
    pub goal: String,
    #[serde(default)]
    pub proof: Vec<TacticStep>,
    pub source: RecordSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("malformed record at byte {offset}: {message}")]
    MalformedRecord { offset: usize, message: String },
    #[error("invalid record `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

impl TheoremRecord {
    /// A seed record with the given proof.
    pub fn seed(name: &str, premises: Vec<Premise>, goal: &str, proof: Vec<TacticStep>) -> Self {
        Self {
            name: name.to_string(),
            imports: Vec::new(),
            premises,
            goal: goal.to_string(),
            proof,
            source: RecordSource::Seed,
            provenance: None,
        }
    }

    pub fn check_invariants(&self) -> Result<(), RecordError> {
        let invalid = |reason: &str| RecordError::Invalid {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name is empty"));
        }
        if self.proof.is_empty() && self.source != RecordSource::Seed {
            return Err(invalid("only seed stubs may have an empty proof"));
        }
        let wants_provenance = matches!(
            self.source,
            RecordSource::Generated | RecordSource::Corrected
        );
        if wants_provenance != self.provenance.is_some() {
            return Err(invalid(
                "provenance must be present exactly for generated or corrected records",
            ));
        }
        Ok(())
    }

    pub fn prediction_steps(&self) -> usize {
        self.provenance.as_ref().map_or(0, |p| p.prediction_steps)
    }

    /// Lean source text of the statement followed by `:= by` and the proof.
    pub fn to_lean(&self) -> String {
        let mut out = String::new();
        for import in &self.imports {
            out.push_str(import);
            out.push('\n');
        }
        out.push_str(&self.statement_header());
        out.push_str(" := by");
        if self.proof.is_empty() {
            out.push_str(" sorry");
        }
        for step in &self.proof {
            out.push_str("\n  ");
            out.push_str(step.text());
        }
        out
    }

    /// `theorem name (p : T) ... : goal` without a proof body.
    pub fn statement_header(&self) -> String {
        let mut out = format!("theorem {}", self.name);
        for premise in &self.premises {
            out.push_str(&format!(" ({} : {})", premise.name, premise.type_expr));
        }
        out.push_str(" : ");
        out.push_str(&self.goal);
        out
    }
}

pub fn encode_record(record: &TheoremRecord) -> Result<String, RecordError> {
    record.check_invariants()?;
    Ok(serde_json::to_string(record).expect("records always serialize"))
}

pub fn decode_record(line: &str) -> Result<TheoremRecord, RecordError> {
    let record: TheoremRecord =
        serde_json::from_str(line).map_err(|err| RecordError::MalformedRecord {
            offset: json_error_offset(line, &err),
            message: err.to_string(),
        })?;
    record.check_invariants()?;
    Ok(record)
}

/// Byte offset into `text` of a serde_json error position.
pub(crate) fn json_error_offset(text: &str, err: &serde_json::Error) -> usize {
    let line = err.line().max(1);
    let start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (start + err.column().saturating_sub(1)).min(text.len())
}

/// One tactic application observed at a live state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateTacticPair {
    pub pp: String,
    pub name: String,
    #[serde(rename = "goalsBefore")]
    pub goals_before: Vec<String>,
    #[serde(rename = "goalsAfter")]
    pub goals_after: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub error: bool,
}

impl StateTacticPair {
    pub fn new(tactic: &TacticStep, goals_before: Vec<String>, goals_after: Vec<String>) -> Self {
        Self {
            pp: tactic.text().to_string(),
            name: format!("{:?}", tactic.kind()).to_lowercase(),
            goals_before,
            goals_after,
            error: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatCategory {
    Deduplicated,
    Correct,
    Corrected,
    New,
}

impl StatCategory {
    pub const ALL: [StatCategory; 4] = [
        StatCategory::Deduplicated,
        StatCategory::Correct,
        StatCategory::Corrected,
        StatCategory::New,
    ];
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("n_new ({n_new}) != n_correct ({n_correct}) + n_corrected ({n_corrected})")]
    SubtotalMismatch {
        n_new: u64,
        n_correct: u64,
        n_corrected: u64,
    },
    #[error("histogram for {category:?} sums to {sum}, expected {expected}")]
    HistogramMismatch {
        category: StatCategory,
        sum: u64,
        expected: u64,
    },
}

/// Counts per validation category, with per-prediction-step histograms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    n_candidate: u64,
    n_deduplicated: u64,
    n_correct: u64,
    n_corrected: u64,
    n_new: u64,
    step_histogram: BTreeMap<StatCategory, BTreeMap<usize, u64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStats {
    n_candidate: u64,
    n_deduplicated: u64,
    n_correct: u64,
    n_corrected: u64,
    n_new: u64,
    #[serde(default)]
    step_histogram: BTreeMap<StatCategory, BTreeMap<usize, u64>>,
}

impl<'de> Deserialize<'de> for DatasetStats {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawStats::deserialize(deserializer)?;
        let stats = DatasetStats {
            n_candidate: raw.n_candidate,
            n_deduplicated: raw.n_deduplicated,
            n_correct: raw.n_correct,
            n_corrected: raw.n_corrected,
            n_new: raw.n_new,
            step_histogram: raw.step_histogram,
        };
        stats.check().map_err(serde::de::Error::custom)?;
        Ok(stats)
    }
}

impl DatasetStats {
    /// Totals only; `n_new` is derived.
    pub fn from_counts(n_candidate: u64, n_deduplicated: u64, n_correct: u64, n_corrected: u64) -> Self {
        Self {
            n_candidate,
            n_deduplicated,
            n_correct,
            n_corrected,
            n_new: n_correct + n_corrected,
            step_histogram: BTreeMap::new(),
        }
    }

    /// Build from the prediction-step counts of each category's members.
    pub fn from_steps(
        n_candidate: u64,
        deduplicated: &[usize],
        correct: &[usize],
        corrected: &[usize],
    ) -> Self {
        let mut stats = Self::from_counts(
            n_candidate,
            deduplicated.len() as u64,
            correct.len() as u64,
            corrected.len() as u64,
        );
        let mut bump = |cat: StatCategory, steps: &[usize]| {
            let hist = stats.step_histogram.entry(cat).or_default();
            for &s in steps {
                *hist.entry(s).or_default() += 1;
            }
        };
        bump(StatCategory::Deduplicated, deduplicated);
        bump(StatCategory::Correct, correct);
        bump(StatCategory::Corrected, corrected);
        bump(StatCategory::New, correct);
        bump(StatCategory::New, corrected);
        stats
    }

    pub fn check(&self) -> Result<(), StatsError> {
        if self.n_new != self.n_correct + self.n_corrected {
            return Err(StatsError::SubtotalMismatch {
                n_new: self.n_new,
                n_correct: self.n_correct,
                n_corrected: self.n_corrected,
            });
        }
        for (category, hist) in &self.step_histogram {
            let sum: u64 = hist.values().sum();
            let expected = self.count(*category);
            if sum != expected {
                return Err(StatsError::HistogramMismatch {
                    category: *category,
                    sum,
                    expected,
                });
            }
        }
        Ok(())
    }

    pub fn n_candidate(&self) -> u64 {
        self.n_candidate
    }
    pub fn n_deduplicated(&self) -> u64 {
        self.n_deduplicated
    }
    pub fn n_correct(&self) -> u64 {
        self.n_correct
    }
    pub fn n_corrected(&self) -> u64 {
        self.n_corrected
    }
    pub fn n_new(&self) -> u64 {
        self.n_new
    }

    pub fn count(&self, category: StatCategory) -> u64 {
        match category {
            StatCategory::Deduplicated => self.n_deduplicated,
            StatCategory::Correct => self.n_correct,
            StatCategory::Corrected => self.n_corrected,
            StatCategory::New => self.n_new,
        }
    }

    pub fn histogram(&self, category: StatCategory) -> BTreeMap<usize, u64> {
        self.step_histogram.get(&category).cloned().unwrap_or_default()
    }

    /// Element-wise sum of two stats blocks.
    pub fn merged(&self, other: &DatasetStats) -> DatasetStats {
        let mut out = DatasetStats::from_counts(
            self.n_candidate + other.n_candidate,
            self.n_deduplicated + other.n_deduplicated,
            self.n_correct + other.n_correct,
            self.n_corrected + other.n_corrected,
        );
        for src in [self, other] {
            for (cat, hist) in &src.step_histogram {
                let dst = out.step_histogram.entry(*cat).or_default();
                for (step, n) in hist {
                    *dst.entry(*step).or_default() += n;
                }
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Read a JSON-Lines file, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|err| JsonlError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: err.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Read theorem records, enforcing record invariants line by line.
pub fn read_records(path: &Path) -> Result<Vec<TheoremRecord>, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_record(line).map_err(|err| JsonlError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: err.to_string(),
        })?);
    }
    Ok(out)
}

/// Write items as JSON-Lines through a temporary file and an atomic rename.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), JsonlError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("serializable item");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
        file.write_all(bytes).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_record() -> TheoremRecord {
        TheoremRecord::seed(
            "t1",
            vec![Premise::new("x", "ℕ")],
            "x = x",
            tactics(&["rfl"]),
        )
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("x +  0 "), "x + 0");
        assert_eq!(normalize_text(""), "");
        assert_eq!(
            normalize_text("∑ k in Ico 1 (n + 1),\n  n"),
            "∑ k in Ico 1 (n + 1), n"
        );
    }

    #[test]
    fn normalize_applies_nfc() {
        // "e" + combining acute accent composes to U+00E9
        assert_eq!(normalize_text("e\u{301}"), "\u{e9}");
    }

    #[test]
    fn tactic_kinds_follow_leading_token() {
        assert_eq!(TacticStep::parse("rw [add_zero]").kind(), TacticKind::Rewrite);
        assert_eq!(TacticStep::parse("simp at h").kind(), TacticKind::Simp);
        assert_eq!(TacticStep::parse("have h : x = x").kind(), TacticKind::Have);
        assert_eq!(TacticStep::parse("rfl").kind(), TacticKind::Rfl);
        assert_eq!(TacticStep::parse("assumption").kind(), TacticKind::Assumption);
        assert_eq!(TacticStep::parse("omega").kind(), TacticKind::Other);
        assert_eq!(TacticStep::new("   "), Err(EmptyTactic));
    }

    #[test]
    fn record_round_trip() {
        let rec = x_record();
        let line = encode_record(&rec).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(decode_record(&line).unwrap(), rec);
    }

    #[test]
    fn provenance_round_trip_keeps_steps() {
        let mut rec = x_record();
        rec.source = RecordSource::Generated;
        rec.provenance = Some(Provenance {
            root_name: "root".into(),
            path_id: "root/p1".into(),
            prediction_steps: 4,
        });
        let back = decode_record(&encode_record(&rec).unwrap()).unwrap();
        assert_eq!(back.prediction_steps(), 4);
        assert_eq!(back, rec);
    }

    #[test]
    fn missing_goal_is_malformed() {
        let err = decode_record(r#"{"name":"t1","proof":["rfl"],"source":"seed"}"#).unwrap_err();
        assert!(matches!(err, RecordError::MalformedRecord { .. }), "{err}");
        assert!(err.to_string().contains("goal"));
    }

    #[test]
    fn unknown_field_rejected_with_offset() {
        let line = r#"{"name":"t1","goal":"x = x","bogus":1,"source":"seed"}"#;
        match decode_record(line).unwrap_err() {
            RecordError::MalformedRecord { offset, .. } => assert!(offset > 20 && offset <= line.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariants_enforced_on_decode() {
        let generated_without_provenance =
            r#"{"name":"g","goal":"x = x","proof":["rfl"],"source":"generated"}"#;
        assert!(matches!(
            decode_record(generated_without_provenance),
            Err(RecordError::Invalid { .. })
        ));
        let empty_proof_generated = r#"{"name":"g","goal":"x = x","source":"corrected","provenance":{"root_name":"r","path_id":"p","prediction_steps":1}}"#;
        assert!(decode_record(empty_proof_generated).is_err());
        let stub = r#"{"name":"s","goal":"x = x","source":"seed"}"#;
        assert!(decode_record(stub).is_ok());
    }

    #[test]
    fn goal_target_strips_hypotheses() {
        assert_eq!(goal_target("x : ℕ\nh : x = x\n⊢ x + 0 = x"), "x + 0 = x");
        assert_eq!(goal_target("x = x"), "x = x");
    }

    #[test]
    fn stats_subtotal_identity() {
        let stats = DatasetStats::from_counts(592_811, 392_818, 68_771, 31_306);
        assert_eq!(stats.n_new(), 100_077);
        assert!(stats.check().is_ok());
        let bad = r#"{"n_candidate":3,"n_deduplicated":3,"n_correct":2,"n_corrected":1,"n_new":4}"#;
        assert!(serde_json::from_str::<DatasetStats>(bad).is_err());
    }

    #[test]
    fn histograms_partition_counts() {
        let stats = DatasetStats::from_steps(5, &[1, 2, 2, 6], &[2, 6], &[1]);
        assert_eq!(stats.n_new(), 3);
        for cat in StatCategory::ALL {
            assert_eq!(stats.histogram(cat).values().sum::<u64>(), stats.count(cat));
        }
        assert_eq!(stats.histogram(StatCategory::New)[&2], 1);
        let json = serde_json::to_string(&stats).unwrap();
        let back: DatasetStats = serde_json::from_str(&json).unwrap();
        assert_eq!(back, stats);
    }
}
