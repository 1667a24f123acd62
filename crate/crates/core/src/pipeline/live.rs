//! Pipeline over a chat-completion backend and real program tasks.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{
    reviewer_assignment, select_by_evidence, synthesize_loop, Aggregator, Attempt, FinalAnswer, Phase, PhaseRecord,
    PipelineError, PipelineResult, Result, RunConfig, TokenLedger,
};
use crate::exec::{
    execute_batch, execute_process, normalize_output, quality_from_report, ExecutionReport, ProcessExecutor,
    ProcessTaskSpec,
};
use crate::llm::prompts::{
    render_review_prompt, render_role_prompt, render_synthesis_prompt, PriorAttempt, SynthesisEntry, DEFAULT_FIELD_CAP,
};
use crate::llm::{extract_code, parse_verdict, ChatRequest, Client, Message, ReviewVerdict, Role};

/// A problem statement plus, when `task.txt` exists, its executable tests.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveTask {
    pub id: String,
    pub problem: String,
    pub spec: Option<ProcessTaskSpec>,
}

impl LiveTask {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let fail = |message: String| PipelineError::Task {
            task: id.clone(),
            message,
        };
        let problem = fs::read_to_string(dir.join("problem.txt")).map_err(|e| fail(format!("problem.txt: {e}")))?;
        let spec = if dir.join("task.txt").exists() {
            Some(ProcessTaskSpec::from_dir(dir).map_err(|e| fail(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { id, problem, spec })
    }
}

/// `dir` itself when it holds `problem.txt`, otherwise every subdirectory
/// that does, sorted by name.
pub fn load_tasks(dir: &Path) -> Result<Vec<LiveTask>> {
    if dir.join("problem.txt").exists() {
        return Ok(vec![LiveTask::from_dir(dir)?]);
    }
    let listing = fs::read_dir(dir).map_err(|e| PipelineError::Task {
        task: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut dirs: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("problem.txt").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::Task {
            task: dir.display().to_string(),
            message: "no task directories with problem.txt".into(),
        });
    }
    dirs.iter().map(|d| LiveTask::from_dir(d)).collect()
}

struct Proposal {
    index: usize,
    role: String,
    text: String,
}

pub struct LivePipeline {
    pub client: Arc<Client>,
    pub config: RunConfig,
    pub workers: usize,
    pub field_cap: usize,
}

impl LivePipeline {
    pub fn new(client: Arc<Client>, config: RunConfig) -> Self {
        Self {
            client,
            config,
            workers: 4,
            field_cap: DEFAULT_FIELD_CAP,
        }
    }

    fn call(&self, messages: Vec<Message>, temperature: f64) -> crate::llm::Result<crate::llm::ChatExchange> {
        self.client.complete(&ChatRequest {
            messages,
            temperature,
            seed: Some(self.config.seed.root_seed),
        })
    }

    pub fn run(&self, task: &LiveTask, index: u64) -> Result<PipelineResult> {
        self.config.validate()?;
        let solver = Role::new("Solver", "Solve the task.");
        let roles: Vec<&Role> = match self.config.aggregator {
            Aggregator::MajorityVote => vec![&solver; self.config.k_proposers as usize],
            _ => self.config.roles.iter().collect(),
        };
        let (proposals, propose) = self.propose(task, &roles)?;
        let mut ledger = TokenLedger::default();
        ledger.absorb(&propose.tokens);
        let mut trace = vec![propose];
        let texts: Vec<String> = proposals.iter().map(|p| p.text.clone()).collect();

        let reports: Option<Vec<ExecutionReport>> = match (&task.spec, self.config.aggregator) {
            (Some(spec), Aggregator::Prism | Aggregator::OracleSelect) => {
                let exec = ProcessExecutor { spec: spec.clone() };
                let reports = execute_batch(&exec, &texts, self.workers);
                trace.push(PhaseRecord {
                    phase: Phase::Execute,
                    items: reports
                        .iter()
                        .map(|r| json!({ "success": r.success, "tests": r.tests, "error": r.error }))
                        .collect(),
                    tokens: TokenLedger::default(),
                    wall_ms: reports.iter().map(|r| r.wall_ms).sum(),
                });
                Some(reports)
            }
            _ => None,
        };

        let pick_result = |selected: usize, ledger: TokenLedger, trace: Vec<PhaseRecord>| {
            let report = task.spec.as_ref().map(|s| execute_process(s, &texts[selected]));
            PipelineResult {
                task_id: task.id.clone(),
                aggregator: self.config.aggregator,
                final_answer: FinalAnswer::Text(texts[selected].clone()),
                quality: report.as_ref().map(quality_from_report),
                validated: report.is_some(),
                iterations: 0,
                selected_index: proposals[selected].index,
                selected_role: proposals[selected].role.clone(),
                trace,
                ledger,
                diagnostics: None,
            }
        };

        match self.config.aggregator {
            Aggregator::MajorityVote => {
                let answers: Vec<String> = texts.iter().map(|t| normalize_output(t)).collect();
                let mut best = 0;
                let mut best_count = 0;
                for (i, a) in answers.iter().enumerate() {
                    let count = answers.iter().filter(|b| *b == a).count();
                    if count > best_count {
                        best = i;
                        best_count = count;
                    }
                }
                Ok(pick_result(best, ledger, trace))
            }
            Aggregator::RandomSelect => {
                let mut rng = self.config.seed.stream("live.select", index);
                let selected = rng.random_range(0..texts.len());
                Ok(pick_result(selected, ledger, trace))
            }
            Aggregator::OracleSelect => {
                let selected = match &reports {
                    Some(r) => r.iter().position(quality_from_report).unwrap_or(0),
                    None => 0,
                };
                Ok(pick_result(selected, ledger, trace))
            }
            Aggregator::Prism => self.prism_tail(task, &proposals, reports, ledger, trace),
        }
    }

    fn propose(&self, task: &LiveTask, roles: &[&Role]) -> Result<(Vec<Proposal>, PhaseRecord)> {
        let outcomes: Vec<_> = (0..self.config.k_proposers as usize)
            .into_par_iter()
            .map(|k| {
                let role = roles[k % roles.len()];
                (
                    k,
                    role,
                    self.call(
                        render_role_prompt(role, &task.problem),
                        self.config.proposer_temperature,
                    ),
                )
            })
            .collect();
        let mut tokens = TokenLedger::default();
        let mut items = Vec::new();
        let mut proposals = Vec::new();
        for (k, role, outcome) in outcomes {
            match outcome {
                Ok(ex) => {
                    tokens.record(
                        Phase::Propose,
                        role.name.clone(),
                        ex.usage.input_tokens,
                        ex.usage.output_tokens,
                    );
                    let text = extract_code(&ex.response_text);
                    items.push(json!({ "role": role.name, "candidate": text }));
                    proposals.push(Proposal {
                        index: k,
                        role: role.name.clone(),
                        text,
                    });
                }
                Err(e) => {
                    log::warn!("task {}: proposer {} failed: {e}", task.id, role.name);
                    items.push(json!({ "role": role.name, "failed": e.to_string() }));
                }
            }
        }
        if proposals.is_empty() {
            return Err(PipelineError::NoCandidates);
        }
        Ok((
            proposals,
            PhaseRecord {
                phase: Phase::Propose,
                items,
                tokens,
                wall_ms: 0,
            },
        ))
    }

    fn review(
        &self,
        task: &LiveTask,
        proposals: &[Proposal],
        reports: Option<&[ExecutionReport]>,
    ) -> (Vec<Vec<ReviewVerdict>>, PhaseRecord) {
        let n = proposals.len();
        let dedicated = Role::new("Reviewer", "Check the candidate against the evidence.");
        let jobs: Vec<(usize, Role)> = (0..n)
            .flat_map(|k| {
                reviewer_assignment(k, n, self.config.r_reviewers as usize)
                    .into_iter()
                    .map(move |j| (k, j))
            })
            .map(|(k, j)| {
                let role = match j {
                    Some(j) => self
                        .config
                        .roles
                        .get(proposals[j].index)
                        .cloned()
                        .unwrap_or_else(|| dedicated.clone()),
                    None => dedicated.clone(),
                };
                (k, role)
            })
            .collect();
        let outcomes: Vec<_> = jobs
            .par_iter()
            .map(|(k, role)| {
                let report = reports.map(|r| &r[*k]);
                let messages = render_review_prompt(role, &task.problem, &proposals[*k].text, report, self.field_cap);
                self.call(messages, 0.0)
            })
            .collect();
        let mut verdicts = vec![Vec::new(); n];
        let mut tokens = TokenLedger::default();
        let mut items = Vec::new();
        for ((k, role), outcome) in jobs.iter().zip(outcomes) {
            let verdict = match outcome {
                Ok(ex) => {
                    tokens.record(
                        Phase::Review,
                        format!("{}->{}", role.name, proposals[*k].role),
                        ex.usage.input_tokens,
                        ex.usage.output_tokens,
                    );
                    parse_verdict(&role.name, &ex.response_text)
                }
                Err(e) => {
                    log::warn!("task {}: review by {} failed: {e}", task.id, role.name);
                    ReviewVerdict::abstain(&role.name, &format!("review call failed: {e}"))
                }
            };
            items.push(json!({ "candidate": proposals[*k].index, "review": verdict }));
            verdicts[*k].push(verdict);
        }
        (
            verdicts,
            PhaseRecord {
                phase: Phase::Review,
                items,
                tokens,
                wall_ms: 0,
            },
        )
    }

    fn prism_tail(
        &self,
        task: &LiveTask,
        proposals: &[Proposal],
        reports: Option<Vec<ExecutionReport>>,
        mut ledger: TokenLedger,
        mut trace: Vec<PhaseRecord>,
    ) -> Result<PipelineResult> {
        let n = proposals.len();
        let mut verdicts = vec![Vec::new(); n];
        if self.config.r_reviewers > 0 {
            let (v, record) = self.review(task, proposals, reports.as_deref());
            verdicts = v;
            ledger.absorb(&record.tokens);
            trace.push(record);
        }
        let passed: Vec<bool> = match &reports {
            Some(r) => r.iter().map(quality_from_report).collect(),
            None => vec![false; n],
        };
        let positives: Vec<usize> = verdicts
            .iter()
            .map(|v| v.iter().filter(|r| r.is_positive()).count())
            .collect();
        let selected = select_by_evidence(&passed, &positives);

        let entries: Vec<SynthesisEntry<'_>> = proposals
            .iter()
            .enumerate()
            .map(|(k, p)| SynthesisEntry {
                role: &p.role,
                candidate: &p.text,
                report: reports.as_ref().map(|r| &r[k]),
                reviews: &verdicts[k],
            })
            .collect();
        let synthesize = |round: u32, prior: Option<(&String, &ExecutionReport)>| {
            let prior = prior.map(|(c, r)| PriorAttempt {
                candidate: c,
                error: &r.error,
            });
            let messages = render_synthesis_prompt(&task.problem, &entries, prior, self.field_cap);
            let ex = self.call(messages, self.config.synthesis_temperature)?;
            let mut tokens = TokenLedger::default();
            tokens.record(
                Phase::Synthesize,
                format!("round{round}"),
                ex.usage.input_tokens,
                ex.usage.output_tokens,
            );
            Ok(Attempt {
                candidate: extract_code(&ex.response_text),
                tokens,
            })
        };
        let outcome = match &task.spec {
            Some(spec) => synthesize_loop(
                self.config.s_synth_iters,
                synthesize,
                Some(|c: &String| execute_process(spec, c)),
            )?,
            None => synthesize_loop(
                self.config.s_synth_iters,
                synthesize,
                None::<fn(&String) -> ExecutionReport>,
            )?,
        };
        for rec in outcome.records {
            ledger.absorb(&rec.tokens);
            trace.push(rec);
        }
        Ok(PipelineResult {
            task_id: task.id.clone(),
            aggregator: Aggregator::Prism,
            final_answer: FinalAnswer::Text(outcome.candidate),
            quality: outcome.report.as_ref().map(quality_from_report),
            validated: outcome.validated,
            iterations: outcome.iterations,
            selected_index: proposals[selected].index,
            selected_role: proposals[selected].role.clone(),
            trace,
            ledger,
            diagnostics: None,
        })
    }
}
