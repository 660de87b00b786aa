//! Backend-neutral prover interface and the proof-state snapshot type.

mod goal;
mod mock;
mod rules;

pub use goal::{Goal, Hyp, HypKind};
pub use mock::{MockProver, TacticCommand};
pub use rules::{Direction, RewriteRule, RuleTable, RuleTableError};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{TacticStep, TheoremRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub severity: Severity,
    pub text: String,
}

impl Message {
    pub fn error(text: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            text: text.into(),
        }
    }

    pub fn warning(text: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            text: text.into(),
        }
    }
}

pub const SORRY_WARNING: &str = "declaration uses 'sorry'";

/// Snapshot of a prover session after some tactic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProofState {
    pub session: String,
    pub state_ids: Vec<i64>,
    pub goals: Vec<String>,
    #[serde(default)]
    pub messages: Vec<Message>,
    pub error: bool,
    pub finished: bool,
}

impl ProofState {
    /// A live state; `finished` is derived from the goal count.
    pub fn live(session: &str, state_ids: Vec<i64>, goals: Vec<String>, messages: Vec<Message>) -> Self {
        let finished = goals.is_empty();
        Self {
            session: session.to_string(),
            state_ids,
            goals,
            messages,
            error: false,
            finished,
        }
    }

    pub fn errored(session: &str, goals: Vec<String>, mut messages: Vec<Message>, why: impl Into<String>) -> Self {
        messages.push(Message::error(why));
        Self {
            session: session.to_string(),
            state_ids: Vec::new(),
            goals,
            messages,
            error: true,
            finished: false,
        }
    }

    pub fn check_invariants(&self) -> bool {
        (!self.finished || (self.goals.is_empty() && !self.error))
            && (!self.error || !self.finished)
            && (self.error || self.state_ids.len() == self.goals.len())
    }

    pub fn first_error(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.severity == Severity::Error)
            .map(|m| m.text.as_str())
    }

    pub fn used_sorry(&self) -> bool {
        self.messages.iter().any(|m| m.text.contains(SORRY_WARNING))
    }
}

/// Result of replaying a whole theorem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub correct: bool,
    pub finished: bool,
    pub messages: Vec<Message>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProverError {
    #[error("prover backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prover timed out after {0:?}")]
    Timeout(Duration),
}

/// Interaction surface shared by the mock and Lean backends.
///
/// All tactic-level failure is reported in-band through
/// [`ProofState::error`]; `Err` is reserved for backend faults.
pub trait Prover {
    fn get_init_state(&mut self, theorem: &TheoremRecord) -> Result<ProofState, ProverError>;

    fn run_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError>;

    fn run_have_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError>;

    fn is_correct_and_finished(&mut self, theorem: &TheoremRecord) -> Result<Verification, ProverError>;
}

/// Verification by step-wise replay, shared by backends without a
/// whole-file checker.
pub fn replay_verification<P: Prover + ?Sized>(
    prover: &mut P,
    theorem: &TheoremRecord,
    budget: Duration,
) -> Result<Verification, ProverError> {
    let started = std::time::Instant::now();
    let mut state = prover.get_init_state(theorem)?;
    let mut messages = state.messages.clone();
    for step in &theorem.proof {
        if started.elapsed() > budget {
            return Err(ProverError::Timeout(budget));
        }
        if state.error {
            break;
        }
        state = prover.run_tactic(&state, step)?;
        for m in &state.messages {
            if !messages.contains(m) {
                messages.push(m.clone());
            }
        }
    }
    let correct = !state.error;
    let finished = correct && state.finished && !messages.iter().any(|m| m.text.contains(SORRY_WARNING));
    Ok(Verification {
        correct,
        finished,
        messages,
    })
}

/// Boxed prover trait objects are provers too.
impl<P: Prover + ?Sized> Prover for Box<P> {
    fn get_init_state(&mut self, theorem: &TheoremRecord) -> Result<ProofState, ProverError> {
        (**self).get_init_state(theorem)
    }
    fn run_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError> {
        (**self).run_tactic(state, tactic)
    }
    fn run_have_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError> {
        (**self).run_have_tactic(state, tactic)
    }
    fn is_correct_and_finished(&mut self, theorem: &TheoremRecord) -> Result<Verification, ProverError> {
        (**self).is_correct_and_finished(theorem)
    }
}
