//! Pipeline over the simulated world: answers are opaque ids with quality bits.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    modal_answer, reviewer_assignment, select_by_evidence, synthesize_loop, Aggregator, Attempt, Diagnostics,
    FinalAnswer, Phase, PhaseRecord, PipelineError, PipelineResult, Result, RunConfig, TokenLedger,
};
use crate::exec::{execute_synthetic, quality_from_report, ExecutionReport};
use crate::simworld::{sample_candidate, sample_review, AgentPopulation, Candidate, ReviewerModel, SimRng, TaskModel};

/// Per-call token costs of the simulated backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub propose: u64,
    pub review: u64,
    pub synthesize: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            propose: 800,
            review: 400,
            synthesize: 1200,
        }
    }
}

impl CostModel {
    /// Three quarters of a call's cost is prompt, the rest completion.
    pub fn split(cost: u64) -> (u64, u64) {
        (cost - cost / 4, cost / 4)
    }
}

/// How the simulated synthesizer behaves when the selected candidate carries
/// no positive review: each round independently succeeds with
/// `per_iteration_success`, provided some proposal was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisModel {
    pub per_iteration_success: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedWorld {
    pub population: AgentPopulation,
    pub task: TaskModel,
    pub reviewers: ReviewerModel,
    pub synthesis: SynthesisModel,
    pub costs: CostModel,
}

impl SimulatedWorld {
    /// Exchangeable population of `k` agents with success `p`, pairwise
    /// correlation `rho`, reviewer error `eps0` and synthesizer success `1 − eps0`.
    pub fn standard(k: u32, p: f64, rho: f64, eps0: f64) -> Result<Self> {
        Ok(Self {
            population: AgentPopulation::exchangeable(k as usize, p, rho)?,
            task: TaskModel::new(p, 1, 1)?,
            reviewers: ReviewerModel::new(eps0, 0)?,
            synthesis: SynthesisModel {
                per_iteration_success: 1.0 - eps0,
            },
            costs: CostModel::default(),
        })
    }

    pub fn with_population(mut self, population: AgentPopulation) -> Self {
        self.population = population;
        self
    }

    pub fn with_task(mut self, task: TaskModel) -> Self {
        self.task = task;
        self
    }

    pub fn with_synthesis_success(mut self, q: f64) -> Self {
        self.synthesis.per_iteration_success = q;
        self
    }

    fn check(&self, config: &RunConfig) -> Result<()> {
        config.validate()?;
        if self.population.k() != config.k_proposers as usize {
            return Err(PipelineError::Config(format!(
                "population has {} agents but k_proposers is {}",
                self.population.k(),
                config.k_proposers
            )));
        }
        if !(0.0..=1.0).contains(&self.synthesis.per_iteration_success) {
            return Err(PipelineError::Config("synthesis success must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Runs task `index`; every random draw comes from streams keyed by the
    /// index, so tasks can run in any order or in parallel.
    pub fn run(&self, config: &RunConfig, index: u64) -> Result<PipelineResult> {
        self.check(config)?;
        let mut rng = config.seed.stream("sim.propose", index);
        let candidates = self.propose(&mut rng);
        let mut ledger = TokenLedger::default();
        let propose = self.propose_record(config, &candidates);
        ledger.absorb(&propose.tokens);
        let task_id = format!("sim-{index}");
        match config.aggregator {
            Aggregator::Prism => self.run_prism(config, index, task_id, candidates, propose, ledger),
            Aggregator::MajorityVote => {
                let ids: Vec<u32> = candidates.iter().map(|c| c.answer_id).collect();
                let answer = modal_answer(&ids).expect("k >= 1");
                let selected = ids.iter().position(|&a| a == answer).unwrap_or(0);
                Ok(self.baseline_result(config, task_id, &candidates, selected, answer, propose, ledger))
            }
            Aggregator::RandomSelect => {
                let mut pick = config.seed.stream("sim.select", index);
                let selected = pick.random_range(0..candidates.len());
                let answer = candidates[selected].answer_id;
                Ok(self.baseline_result(config, task_id, &candidates, selected, answer, propose, ledger))
            }
            Aggregator::OracleSelect => {
                let selected = candidates.iter().position(|c| c.quality).unwrap_or(0);
                let answer = candidates[selected].answer_id;
                Ok(self.baseline_result(config, task_id, &candidates, selected, answer, propose, ledger))
            }
        }
    }

    fn propose(&self, rng: &mut SimRng) -> Vec<Candidate> {
        let successes = self.population.sample(rng);
        successes
            .into_iter()
            .map(|s| sample_candidate(&self.task, s, rng))
            .collect()
    }

    fn propose_record(&self, config: &RunConfig, candidates: &[Candidate]) -> PhaseRecord {
        let mut tokens = TokenLedger::default();
        let (i, o) = CostModel::split(self.costs.propose);
        let items = candidates
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let role = config.role_label(k);
                tokens.record(Phase::Propose, role.clone(), i, o);
                json!({ "role": role, "answer_id": c.answer_id, "quality": c.quality })
            })
            .collect();
        PhaseRecord {
            phase: Phase::Propose,
            items,
            tokens,
            wall_ms: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn baseline_result(
        &self,
        config: &RunConfig,
        task_id: String,
        candidates: &[Candidate],
        selected: usize,
        answer: u32,
        propose: PhaseRecord,
        ledger: TokenLedger,
    ) -> PipelineResult {
        let correct = candidates.iter().filter(|c| c.quality).count() as u32;
        PipelineResult {
            task_id,
            aggregator: config.aggregator,
            final_answer: FinalAnswer::AnswerId(answer),
            quality: Some(self.task.is_correct_id(answer)),
            validated: false,
            iterations: 0,
            selected_index: selected,
            selected_role: config.role_label(selected),
            trace: vec![propose],
            ledger,
            diagnostics: Some(Diagnostics {
                coverage: correct > 0,
                correct_candidates: correct,
                ..Diagnostics::default()
            }),
        }
    }

    fn run_prism(
        &self,
        config: &RunConfig,
        index: u64,
        task_id: String,
        candidates: Vec<Candidate>,
        propose: PhaseRecord,
        mut ledger: TokenLedger,
    ) -> Result<PipelineResult> {
        let n = candidates.len();
        let reports: Vec<ExecutionReport> = candidates.iter().map(|c| execute_synthetic(c.quality)).collect();
        let passed: Vec<bool> = reports.iter().map(quality_from_report).collect();
        let execute = PhaseRecord {
            phase: Phase::Execute,
            items: passed.iter().map(|&p| json!({ "passed": p })).collect(),
            tokens: TokenLedger::default(),
            wall_ms: 0,
        };
        let mut trace = vec![propose, execute];

        let r = config.r_reviewers as usize;
        let mut positives = vec![0usize; n];
        let mut diag = Diagnostics {
            correct_candidates: candidates.iter().filter(|c| c.quality).count() as u32,
            ..Diagnostics::default()
        };
        diag.coverage = diag.correct_candidates > 0;
        if r > 0 {
            let mut rng = config.seed.stream("sim.review", index);
            let mut tokens = TokenLedger::default();
            let (ci, co) = CostModel::split(self.costs.review);
            let mut items = Vec::with_capacity(n * r);
            for k in 0..n {
                let mut all_rejected = true;
                for reviewer in reviewer_assignment(k, n, r) {
                    let verdict = sample_review(&self.reviewers, passed[k], &mut rng);
                    positives[k] += usize::from(verdict);
                    all_rejected &= !verdict;
                    let who = reviewer.map_or_else(|| "Reviewer".to_string(), |j| config.role_label(j));
                    tokens.record(Phase::Review, format!("{who}->{}", config.role_label(k)), ci, co);
                    items.push(json!({ "candidate": k, "reviewer": who, "verdict": verdict }));
                }
                if candidates[k].quality {
                    diag.correct_reviewed += 1;
                    diag.correct_all_rejected += u32::from(all_rejected);
                }
            }
            ledger.absorb(&tokens);
            trace.push(PhaseRecord {
                phase: Phase::Review,
                items,
                tokens,
                wall_ms: 0,
            });
        }

        let selected = select_by_evidence(&passed, &positives);
        diag.anchored = passed[selected] && positives[selected] > 0;
        let anchor = candidates[selected];
        let mut rng = config.seed.stream("sim.synth", index);
        let (si, so) = CostModel::split(self.costs.synthesize);
        let q = self.synthesis.per_iteration_success;
        let outcome = synthesize_loop(
            config.s_synth_iters,
            |round, _prior: Option<(&Candidate, &ExecutionReport)>| {
                let candidate = if diag.anchored && round == 1 {
                    anchor
                } else {
                    let success = diag.coverage && rng.random::<f64>() < q;
                    sample_candidate(&self.task, success, &mut rng)
                };
                let mut tokens = TokenLedger::default();
                tokens.record(Phase::Synthesize, format!("round{round}"), si, so);
                Ok(Attempt { candidate, tokens })
            },
            Some(|c: &Candidate| execute_synthetic(c.quality)),
        )?;
        for rec in outcome.records {
            ledger.absorb(&rec.tokens);
            trace.push(rec);
        }
        Ok(PipelineResult {
            task_id,
            aggregator: Aggregator::Prism,
            final_answer: FinalAnswer::AnswerId(outcome.candidate.answer_id),
            quality: Some(outcome.passed),
            validated: outcome.validated,
            iterations: outcome.iterations,
            selected_index: selected,
            selected_role: config.role_label(selected),
            trace,
            ledger,
            diagnostics: Some(diag),
        })
    }
}
