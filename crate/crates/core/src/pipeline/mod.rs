//! Propose → execute → review → synthesize orchestration and the baseline
//! aggregators, over a simulated world or a chat-completion backend.

pub mod live;
pub mod sim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecutionReport;
use crate::llm::{default_roles, LlmError, Role};
use crate::simworld::{WorldError, WorldSeed};

pub use live::{load_tasks, LivePipeline, LiveTask};
pub use sim::{SimulatedWorld, SynthesisModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("every proposal failed")]
    NoCandidates,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("task {task}: {message}")]
    Task { task: String, message: String },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Prism,
    MajorityVote,
    RandomSelect,
    OracleSelect,
}

impl Aggregator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregator::Prism => "prism",
            Aggregator::MajorityVote => "majority_vote",
            Aggregator::RandomSelect => "random_select",
            Aggregator::OracleSelect => "oracle_select",
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "prism" => Ok(Aggregator::Prism),
            "majority_vote" | "majority" | "vote" => Ok(Aggregator::MajorityVote),
            "random_select" | "random" => Ok(Aggregator::RandomSelect),
            "oracle_select" | "oracle" => Ok(Aggregator::OracleSelect),
            other => Err(format!(
                "unknown aggregator `{other}` (expected prism, majority_vote, random_select, oracle_select)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Simulated,
    Llm,
    #[serde(alias = "mock")]
    MockLlm,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simulated" => Ok(Backend::Simulated),
            "llm" => Ok(Backend::Llm),
            "mock" | "mock_llm" => Ok(Backend::MockLlm),
            other => Err(format!("unknown backend `{other}` (expected simulated, llm, mock)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k_proposers: u32,
    pub r_reviewers: u32,
    pub s_synth_iters: u32,
    pub roles: Vec<Role>,
    pub aggregator: Aggregator,
    pub backend: Backend,
    pub proposer_temperature: f64,
    pub synthesis_temperature: f64,
    pub seed: WorldSeed,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k_proposers: 3,
            r_reviewers: 1,
            s_synth_iters: 3,
            roles: default_roles(),
            aggregator: Aggregator::Prism,
            backend: Backend::Simulated,
            proposer_temperature: 0.7,
            synthesis_temperature: 0.0,
            seed: WorldSeed::new(42),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_proposers == 0 {
            return Err(PipelineError::Config("k_proposers must be at least 1".into()));
        }
        if self.s_synth_iters == 0 {
            return Err(PipelineError::Config("s_synth_iters must be at least 1".into()));
        }
        if self.backend != Backend::Simulated && self.roles.len() != self.k_proposers as usize {
            return Err(PipelineError::Config(format!(
                "{} roles configured for {} proposers",
                self.roles.len(),
                self.k_proposers
            )));
        }
        for (name, t) in [
            ("proposer_temperature", self.proposer_temperature),
            ("synthesis_temperature", self.synthesis_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(PipelineError::Config(format!("{name} {t} is outside [0, 2]")));
            }
        }
        Ok(())
    }

    /// Label of proposer `k`: its role name, or `agent<k>` past the role list.
    pub fn role_label(&self, k: usize) -> String {
        self.roles
            .get(k)
            .map(|r| r.name.clone())
            .unwrap_or_else(|| format!("agent{k}"))
    }
}

/// Reviewers of proposer `k`: `r` picks cycling through the other proposers.
/// A lone proposer is reviewed by a dedicated reviewer, reported as `None`.
pub fn reviewer_assignment(k: usize, n: usize, r: usize) -> Vec<Option<usize>> {
    if n <= 1 {
        return vec![None; r];
    }
    (0..r).map(|i| Some((k + 1 + i % (n - 1)) % n)).collect()
}

/// Index of the best candidate: passing candidates first, then most
/// positive reviews, then lowest index.
pub fn select_by_evidence(passed: &[bool], positives: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..passed.len() {
        let key = (passed[i], positives[i]);
        if key > (passed[best], positives[best]) {
            best = i;
        }
    }
    best
}

/// Modal value, ties broken toward the smallest.
pub fn modal_answer<T: Ord + Clone>(answers: &[T]) -> Option<T> {
    let mut sorted = answers.to_vec();
    sorted.sort();
    let mut best: Option<(T, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|a| **a == sorted[i]).count() + i;
        if best.as_ref().is_none_or(|(_, c)| j - i > *c) {
            best = Some((sorted[i].clone(), j - i));
        }
        i = j;
    }
    best.map(|(a, _)| a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Propose,
    Execute,
    Review,
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub phase: Phase,
    pub label: String,
    pub input: u64,
    pub output: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub per_call: Vec<CallRecord>,
}

impl TokenLedger {
    pub fn record(&mut self, phase: Phase, label: impl Into<String>, input: u64, output: u64) {
        self.input_tokens += input;
        self.output_tokens += output;
        self.per_call.push(CallRecord {
            phase,
            label: label.into(),
            input,
            output,
        });
    }

    pub fn absorb(&mut self, other: &TokenLedger) {
        for c in &other.per_call {
            self.record(c.phase, c.label.clone(), c.input, c.output);
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    pub fn is_balanced(&self) -> bool {
        let (i, o) = self
            .per_call
            .iter()
            .fold((0, 0), |(i, o), c| (i + c.input, o + c.output));
        i == self.input_tokens && o == self.output_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub items: Vec<serde_json::Value>,
    pub tokens: TokenLedger,
    #[serde(skip)]
    pub wall_ms: u64,
}

/// Returned answer: an opaque id in simulation, program text otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalAnswer {
    AnswerId(u32),
    Text(String),
}

/// Ground-truth bookkeeping available only in simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub coverage: bool,
    pub correct_candidates: u32,
    /// Correct candidates that were reviewed at least once.
    pub correct_reviewed: u32,
    /// Correct candidates whose every reviewer rejected them.
    pub correct_all_rejected: u32,
    pub anchored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub task_id: String,
    pub aggregator: Aggregator,
    pub final_answer: FinalAnswer,
    pub quality: Option<bool>,
    pub validated: bool,
    pub iterations: u32,
    pub selected_index: usize,
    pub selected_role: String,
    pub trace: Vec<PhaseRecord>,
    pub ledger: TokenLedger,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl PipelineResult {
    /// The per-task record written by `prism pipeline`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "task_id": self.task_id,
            "aggregator": self.aggregator,
            "quality": self.quality,
            "tokens_in": self.ledger.input_tokens,
            "tokens_out": self.ledger.output_tokens,
            "iterations": self.iterations,
            "selected_role": self.selected_role,
        })
    }

    pub fn synthesize_records(&self) -> usize {
        self.trace.iter().filter(|p| p.phase == Phase::Synthesize).count()
    }

    /// Phases appear in workflow order with exactly one propose phase.
    pub fn trace_is_ordered(&self) -> bool {
        let proposes = self.trace.iter().filter(|p| p.phase == Phase::Propose).count();
        proposes == 1 && self.trace.windows(2).all(|w| w[0].phase <= w[1].phase)
    }
}

/// What one synthesis round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt<C> {
    pub candidate: C,
    pub tokens: TokenLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome<C> {
    pub candidate: C,
    pub report: Option<ExecutionReport>,
    pub passed: bool,
    pub validated: bool,
    pub iterations: u32,
    pub records: Vec<PhaseRecord>,
}

/// Closed-loop synthesis: synthesize, execute, return on pass, otherwise
/// refine with the failing report, at most `t_max` rounds.
///
/// `synthesize` receives the round number and the previous attempt with its
/// report. Without an executor the first synthesis is returned unvalidated.
pub fn synthesize_loop<C, S, E>(t_max: u32, mut synthesize: S, mut execute: Option<E>) -> Result<LoopOutcome<C>>
where
    C: Clone + Serialize,
    S: FnMut(u32, Option<(&C, &ExecutionReport)>) -> Result<Attempt<C>>,
    E: FnMut(&C) -> ExecutionReport,
{
    if t_max == 0 {
        return Err(PipelineError::Config("t_max must be at least 1".into()));
    }
    let mut records = Vec::new();
    let mut last: Option<(C, ExecutionReport)> = None;
    for round in 1..=t_max {
        let attempt = synthesize(round, last.as_ref().map(|(c, r)| (c, r)))?;
        let Some(exec) = execute.as_mut() else {
            records.push(PhaseRecord {
                phase: Phase::Synthesize,
                items: vec![serde_json::json!({ "round": round, "candidate": attempt.candidate })],
                tokens: attempt.tokens,
                wall_ms: 0,
            });
            return Ok(LoopOutcome {
                candidate: attempt.candidate,
                report: None,
                passed: false,
                validated: false,
                iterations: round,
                records,
            });
        };
        let report = exec(&attempt.candidate);
        let passed = crate::exec::quality_from_report(&report);
        records.push(PhaseRecord {
            phase: Phase::Synthesize,
            items: vec![serde_json::json!({
                "round": round,
                "candidate": attempt.candidate,
                "passed": passed,
                "error": report.error,
            })],
            tokens: attempt.tokens,
            wall_ms: report.wall_ms,
        });
        if passed {
            return Ok(LoopOutcome {
                candidate: attempt.candidate,
                report: Some(report),
                passed: true,
                validated: true,
                iterations: round,
                records,
            });
        }
        last = Some((attempt.candidate, report));
    }
    let (candidate, report) = last.expect("at least one round ran");
    Ok(LoopOutcome {
        candidate,
        report: Some(report),
        passed: false,
        validated: true,
        iterations: t_max,
        records,
    })
}
