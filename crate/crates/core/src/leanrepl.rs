//! Subprocess client for a Lean 4 REPL speaking JSON over stdio: one
//! request object per line, replies terminated by a blank line.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::prover::{Message, ProofState, Prover, ProverError, Severity, Verification, SORRY_WARNING};
use crate::record::{StateTacticPair, TacticKind, TacticStep, TheoremRecord};

pub const TIMEOUT_ENV: &str = "ATGFORGE_LEAN_TIMEOUT_SECS";
const DEFAULT_TIMEOUT_SECS: u64 = 60;
const DEFAULT_CHECK_SECS: u64 = 160;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplCommand {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cmd: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<i64>,
    #[serde(rename = "proofState", skip_serializing_if = "Option::is_none")]
    pub proof_state: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tactic: Option<String>,
    #[serde(rename = "allTactics", skip_serializing_if = "Option::is_none")]
    pub all_tactics: Option<bool>,
}

impl ReplCommand {
    pub fn command(code: &str, env: Option<i64>) -> Self {
        Self {
            cmd: Some(code.to_string()),
            env,
            ..Self::default()
        }
    }

    pub fn tactic(tactic: &str, proof_state: i64) -> Self {
        Self {
            tactic: Some(tactic.to_string()),
            proof_state: Some(proof_state),
            ..Self::default()
        }
    }

    /// Exactly one of `cmd` or the `(proofState, tactic)` pair.
    pub fn is_well_formed(&self) -> bool {
        match (&self.cmd, self.proof_state, &self.tactic) {
            (Some(_), None, None) => true,
            (None, Some(_), Some(_)) => self.env.is_none() && self.all_tactics.is_none(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplMessage {
    pub severity: Severity,
    pub pos: Pos,
    #[serde(rename = "endPos", default, skip_serializing_if = "Option::is_none")]
    pub end_pos: Option<Pos>,
    pub data: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sorry {
    #[serde(rename = "proofState", default, skip_serializing_if = "Option::is_none")]
    pub proof_state: Option<i64>,
    pub pos: Pos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<String>>,
    #[serde(rename = "endPos", default, skip_serializing_if = "Option::is_none")]
    pub end_pos: Option<Pos>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Every reply shape the client understands. Fields absent on the wire stay
/// absent on re-serialization; unrecognized fields are carried in `extra`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<i64>,
    #[serde(rename = "proofState", default, skip_serializing_if = "Option::is_none")]
    pub proof_state: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proofstates: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<ReplMessage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sorries: Option<Vec<Sorry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tactics: Option<Vec<StateTacticPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish: Option<bool>,
    /// Top-level failure text, as in `{"message": "Lean error: ..."}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ReplResponse {
    pub fn messages(&self) -> &[ReplMessage] {
        self.messages.as_deref().unwrap_or_default()
    }

    pub fn has_error(&self) -> bool {
        self.error == Some(true)
            || self.message.is_some()
            || self.messages().iter().any(|m| m.severity == Severity::Error)
    }

    pub fn used_sorry(&self) -> bool {
        self.messages().iter().any(|m| m.data.contains(SORRY_WARNING))
    }

    fn prover_messages(&self) -> Vec<Message> {
        let mut out: Vec<Message> = self
            .messages()
            .iter()
            .map(|m| Message {
                severity: m.severity,
                text: m.data.clone(),
            })
            .collect();
        if let Some(text) = &self.message {
            out.push(Message::error(text.clone()));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ReplError {
    #[error("cannot start the REPL: {0}")]
    Spawn(std::io::Error),
    #[error("REPL process exited: {0}")]
    Crashed(String),
    #[error("malformed REPL reply: {0}")]
    Protocol(String),
    #[error("REPL command timed out after {0:?}")]
    Timeout(Duration),
}

impl From<ReplError> for ProverError {
    fn from(e: ReplError) -> Self {
        match e {
            ReplError::Timeout(d) => ProverError::Timeout(d),
            other => ProverError::BackendUnavailable(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeanConfig {
    pub repl_path: PathBuf,
    pub args: Vec<String>,
    pub workdir: Option<PathBuf>,
    pub timeout_secs: u64,
    pub check_timeout_secs: u64,
    /// Prepended to every theorem without imports of its own.
    pub header: String,
}

impl Default for LeanConfig {
    fn default() -> Self {
        Self {
            repl_path: PathBuf::from("repl"),
            args: Vec::new(),
            workdir: None,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            check_timeout_secs: DEFAULT_CHECK_SECS,
            header: "import Mathlib\nopen Finset Nat".to_string(),
        }
    }
}

impl LeanConfig {
    /// The per-command deadline, honoring the environment override.
    pub fn command_timeout(&self) -> Duration {
        let secs = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .unwrap_or(self.timeout_secs);
        Duration::from_secs(secs)
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<Result<String, String>>,
}

impl Process {
    fn spawn(cfg: &LeanConfig) -> Result<Self, ReplError> {
        let mut cmd = Command::new(&cfg.repl_path);
        cmd.args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        if let Some(dir) = &cfg.workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(ReplError::Spawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            let mut buf = String::new();
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) | Err(_) => {
                        let _ = tx.send(Err("end of output".to_string()));
                        return;
                    }
                    Ok(_) => {}
                }
                if line.trim().is_empty() {
                    if !buf.trim().is_empty() && tx.send(Ok(std::mem::take(&mut buf))).is_err() {
                        return;
                    }
                    buf.clear();
                } else {
                    buf.push_str(&line);
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            replies: rx,
        })
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One REPL process. Commands are serialized; a crash or timeout restarts
/// the process and replays the import block, invalidating earlier state
/// ids.
pub struct LeanRepl {
    cfg: LeanConfig,
    proc: Option<Process>,
    generation: u64,
    imports: Option<(String, i64)>,
}

impl std::fmt::Debug for LeanRepl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LeanRepl")
            .field("cfg", &self.cfg)
            .field("generation", &self.generation)
            .finish()
    }
}

impl Drop for LeanRepl {
    fn drop(&mut self) {
        if let Some(p) = &mut self.proc {
            p.kill();
        }
    }
}

impl LeanRepl {
    /// Starts the process eagerly so a missing executable fails here.
    pub fn start(cfg: LeanConfig) -> Result<Self, ReplError> {
        let proc = Process::spawn(&cfg)?;
        Ok(Self {
            cfg,
            proc: Some(proc),
            generation: 0,
            imports: None,
        })
    }

    fn session(&self) -> String {
        format!("lean:{}", self.generation)
    }

    fn restart(&mut self) -> Result<(), ReplError> {
        if let Some(p) = &mut self.proc {
            p.kill();
        }
        self.proc = None;
        self.generation += 1;
        self.proc = Some(Process::spawn(&self.cfg)?);
        if let Some((code, _)) = self.imports.take() {
            log::info!("REPL restarted, replaying imports");
            self.run_import(&code)?;
        }
        Ok(())
    }

    /// Send one command and wait for its reply. On crash or timeout the
    /// process is restarted before the error is returned.
    pub fn send_with_timeout(&mut self, command: &ReplCommand, timeout: Duration) -> Result<ReplResponse, ReplError> {
        if !command.is_well_formed() {
            return Err(ReplError::Protocol("command must carry either cmd or (proofState, tactic)".into()));
        }
        if self.proc.is_none() {
            self.restart()?;
        }
        let line = serde_json::to_string(command).expect("commands serialize");
        let proc = self.proc.as_mut().expect("process running");
        let written = writeln!(proc.stdin, "{line}\n").and_then(|_| proc.stdin.flush());
        let reply = match written {
            Err(e) => Err(ReplError::Crashed(e.to_string())),
            Ok(()) => match proc.replies.recv_timeout(timeout) {
                Ok(Ok(text)) => Ok(text),
                Ok(Err(why)) => Err(ReplError::Crashed(why)),
                Err(RecvTimeoutError::Timeout) => Err(ReplError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => Err(ReplError::Crashed("reader stopped".into())),
            },
        };
        match reply {
            Ok(text) => serde_json::from_str(&text).map_err(|e| ReplError::Protocol(format!("{e}: {text}"))),
            Err(e) => {
                log::warn!("{e}; restarting REPL");
                self.restart()?;
                Err(e)
            }
        }
    }

    pub fn send(&mut self, command: &ReplCommand) -> Result<ReplResponse, ReplError> {
        let timeout = self.cfg.command_timeout();
        self.send_with_timeout(command, timeout)
    }

    /// Elaborate an import block and remember it for crash recovery.
    pub fn run_import(&mut self, code: &str) -> Result<i64, ReplError> {
        let reply = self.send(&ReplCommand::command(code, None))?;
        if reply.has_error() {
            let why = reply.prover_messages().into_iter().map(|m| m.text).collect::<Vec<_>>().join("; ");
            return Err(ReplError::Protocol(format!("import failed: {why}")));
        }
        let env = reply.env.ok_or_else(|| ReplError::Protocol("import reply carries no env".into()))?;
        self.imports = Some((code.to_string(), env));
        Ok(env)
    }

    fn import_env(&mut self, code: &str) -> Result<i64, ReplError> {
        match &self.imports {
            Some((c, env)) if c == code => Ok(*env),
            _ => self.run_import(code),
        }
    }

    /// Submit a statement ending in `:= by sorry`; the sorry's proof state
    /// is the initial state.
    pub fn new_thm(&mut self, code: &str, env: Option<i64>) -> Result<ProofState, ReplError> {
        let reply = self.send(&ReplCommand::command(code, env))?;
        Ok(self.initial_state(&reply))
    }

    fn initial_state(&self, reply: &ReplResponse) -> ProofState {
        let session = self.session();
        let messages: Vec<Message> = reply
            .prover_messages()
            .into_iter()
            .filter(|m| !m.text.contains(SORRY_WARNING))
            .collect();
        if reply.has_error() {
            return ProofState::errored(&session, Vec::new(), messages, "statement failed to elaborate");
        }
        let sorry = reply.sorries.as_deref().and_then(|s| s.first());
        match sorry.and_then(|s| s.proof_state.map(|ps| (ps, s))) {
            Some((ps, s)) => {
                let goals = s
                    .goals
                    .clone()
                    .or_else(|| s.goal.clone().map(|g| vec![g]))
                    .or_else(|| reply.goals.clone())
                    .unwrap_or_default();
                ProofState::live(&session, vec![ps; goals.len()], goals, messages)
            }
            None => ProofState::errored(&session, Vec::new(), messages, "reply has no sorry proof state"),
        }
    }

    /// Static extraction of every tactic application in a source file.
    pub fn run_all_tactics(&mut self, code: &str) -> Result<Vec<StateTacticPair>, ReplError> {
        let mut command = ReplCommand::command(code, None);
        command.all_tactics = Some(true);
        let reply = self.send(&command)?;
        reply
            .tactics
            .ok_or_else(|| ReplError::Protocol("reply carries no tactics".into()))
    }

    fn header_for(&self, theorem: &TheoremRecord) -> String {
        if theorem.imports.is_empty() {
            self.cfg.header.clone()
        } else {
            theorem.imports.join("\n")
        }
    }

    fn without_imports(theorem: &TheoremRecord) -> TheoremRecord {
        let mut t = theorem.clone();
        t.imports.clear();
        t
    }
}

impl Prover for LeanRepl {
    fn get_init_state(&mut self, theorem: &TheoremRecord) -> Result<ProofState, ProverError> {
        let header = self.header_for(theorem);
        let env = match self.import_env(&header) {
            Ok(env) => env,
            Err(ReplError::Protocol(why)) => return Ok(ProofState::errored(&self.session(), vec![], vec![], why)),
            Err(e) => return Err(e.into()),
        };
        let code = format!("{} := by sorry", theorem.statement_header());
        match self.new_thm(&code, Some(env)) {
            Ok(state) => Ok(state),
            Err(ReplError::Protocol(why)) => Ok(ProofState::errored(&self.session(), vec![], vec![], why)),
            Err(e) => Err(e.into()),
        }
    }

    fn run_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError> {
        let session = self.session();
        if state.error {
            return Ok(ProofState::errored(&session, vec![], vec![], "previous state is an error"));
        }
        if state.session != session {
            return Ok(ProofState::errored(&session, vec![], vec![], "proof state invalidated by a REPL restart"));
        }
        let Some(&ps) = state.state_ids.first() else {
            return Ok(ProofState::errored(&session, vec![], vec![], "no goals to be proved"));
        };
        let reply = match self.send(&ReplCommand::tactic(tactic.text(), ps)) {
            Ok(r) => r,
            Err(ReplError::Spawn(e)) => return Err(ProverError::BackendUnavailable(e.to_string())),
            Err(e) => return Ok(ProofState::errored(&self.session(), vec![], vec![], e.to_string())),
        };
        let messages = reply.prover_messages();
        if reply.has_error() {
            return Ok(ProofState::errored(&session, vec![], messages, "tactic failed"));
        }
        let goals = reply.goals.clone().unwrap_or_default();
        let ids = match (reply.proof_state, &reply.proofstates) {
            (_, Some(ids)) if ids.len() == goals.len() => ids.clone(),
            (Some(id), _) => vec![id; goals.len()],
            _ => return Ok(ProofState::errored(&session, vec![], messages, "reply has no proof state")),
        };
        Ok(ProofState::live(&session, ids, goals, messages))
    }

    fn run_have_tactic(&mut self, state: &ProofState, tactic: &TacticStep) -> Result<ProofState, ProverError> {
        if tactic.kind() != TacticKind::Have {
            return Ok(ProofState::errored(
                &self.session(),
                vec![],
                vec![],
                format!("expected a have tactic, got `{tactic}`"),
            ));
        }
        self.run_tactic(state, tactic)
    }

    fn is_correct_and_finished(&mut self, theorem: &TheoremRecord) -> Result<Verification, ProverError> {
        let header = self.header_for(theorem);
        let env = self.import_env(&header)?;
        let code = Self::without_imports(theorem).to_lean();
        let budget = Duration::from_secs(self.cfg.check_timeout_secs);
        let reply = self.send_with_timeout(&ReplCommand::command(&code, Some(env)), budget)?;
        let correct = !reply.has_error();
        Ok(Verification {
            correct,
            finished: correct && !reply.used_sorry(),
            messages: reply.prover_messages(),
        })
    }
}
