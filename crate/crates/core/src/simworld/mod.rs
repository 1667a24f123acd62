//! Seeded stochastic world: correlated proposers, noisy reviewers and
//! tasks whose correct answers may fragment across several variants.

pub mod copula;
pub mod population;
pub mod rng;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use population::{empirical_correlation, AgentPopulation, JointTable};
pub use rng::{SimRng, WorldSeed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("correlation {rho} for pair ({i}, {j}) is outside the feasible range [{min}, {max}]")]
    InfeasibleCorrelation {
        i: usize,
        j: usize,
        rho: f64,
        min: f64,
        max: f64,
    },
    #[error("correlation {rho} for pair ({i}, {j}) sits on the feasibility boundary; use a joint table")]
    BoundaryCorrelation { i: usize, j: usize, rho: f64 },
    #[error("latent correlation matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("reviewer error rate {0} must lie in [0, 0.5)")]
    ReviewerErrorRate(f64),
    #[error("invalid task model: {0}")]
    InvalidTask(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for WorldError {
    fn from(e: csv::Error) -> Self {
        WorldError::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WorldError>;

/// Draws one joint success vector from `pop`.
pub fn sample_correlated_successes<R: Rng + ?Sized>(pop: &AgentPopulation, rng: &mut R) -> Vec<bool> {
    pop.sample(rng)
}

/// A problem whose correct answers come in `correct_variants` distinct forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub per_problem_p: f64,
    pub correct_variants: u32,
    pub incorrect_variants: u32,
}

impl TaskModel {
    pub fn new(per_problem_p: f64, correct_variants: u32, incorrect_variants: u32) -> Result<Self> {
        let task = Self {
            per_problem_p,
            correct_variants,
            incorrect_variants,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.per_problem_p) {
            return Err(WorldError::InvalidTask(format!(
                "per-problem success {} is outside [0, 1]",
                self.per_problem_p
            )));
        }
        if self.correct_variants == 0 || self.incorrect_variants == 0 {
            return Err(WorldError::InvalidTask(
                "need at least one correct and one incorrect variant".into(),
            ));
        }
        Ok(())
    }

    /// Correct answers use ids `0..M`, incorrect ones `M..M+I`.
    pub fn is_correct_id(&self, answer_id: u32) -> bool {
        answer_id < self.correct_variants
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub answer_id: u32,
    pub quality: bool,
}

pub fn sample_candidate<R: Rng + ?Sized>(task: &TaskModel, is_correct: bool, rng: &mut R) -> Candidate {
    let answer_id = if is_correct {
        rng.random_range(0..task.correct_variants)
    } else {
        task.correct_variants + rng.random_range(0..task.incorrect_variants)
    };
    Candidate {
        answer_id,
        quality: is_correct,
    }
}

/// Independent reviewers, each wrong with probability `error_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewerModel {
    pub error_rate: f64,
    pub count_reviewers: u32,
}

impl ReviewerModel {
    /// Zero error is accepted as the noiseless limit.
    pub fn new(error_rate: f64, count_reviewers: u32) -> Result<Self> {
        if !(0.0..0.5).contains(&error_rate) {
            return Err(WorldError::ReviewerErrorRate(error_rate));
        }
        Ok(Self {
            error_rate,
            count_reviewers,
        })
    }
}

pub fn sample_review<R: Rng + ?Sized>(model: &ReviewerModel, true_quality: bool, rng: &mut R) -> bool {
    let wrong = model.error_rate > 0.0 && rng.random::<f64>() < model.error_rate;
    true_quality != wrong
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variant_never_fragments() {
        let task = TaskModel::new(0.5, 1, 3).unwrap();
        let mut rng = WorldSeed::new(1).stream("cand", 0);
        for _ in 0..1000 {
            assert_eq!(sample_candidate(&task, true, &mut rng).answer_id, 0);
            let wrong = sample_candidate(&task, false, &mut rng);
            assert!(!task.is_correct_id(wrong.answer_id) && wrong.answer_id < 4);
        }
    }

    #[test]
    fn variants_are_uniform() {
        let task = TaskModel::new(0.5, 4, 1).unwrap();
        let mut rng = WorldSeed::new(2).stream("cand", 0);
        let mut counts = [0u32; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_candidate(&task, true, &mut rng).answer_id as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn noiseless_reviewer_reports_truth() {
        let model = ReviewerModel::new(0.0, 2).unwrap();
        let mut rng = WorldSeed::new(3).stream("rev", 0);
        for q in [true, false, true] {
            assert_eq!(sample_review(&model, q, &mut rng), q);
        }
    }

    #[test]
    fn reviewer_error_frequency() {
        let model = ReviewerModel::new(0.3, 1).unwrap();
        let mut rng = WorldSeed::new(4).stream("rev", 0);
        let n = 100_000;
        let wrong = (0..n).filter(|_| !sample_review(&model, true, &mut rng)).count();
        assert!((wrong as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn two_reviewers_both_wrong() {
        let model = ReviewerModel::new(0.2, 2).unwrap();
        let mut rng = WorldSeed::new(5).stream("rev", 0);
        let n = 100_000;
        let both = (0..n)
            .filter(|_| !sample_review(&model, true, &mut rng) && !sample_review(&model, true, &mut rng))
            .count();
        assert!((both as f64 / n as f64 - 0.04).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ReviewerModel::new(0.5, 1).is_err());
        assert!(TaskModel::new(0.5, 0, 1).is_err());
        assert!(TaskModel::new(1.5, 1, 1).is_err());
    }
}
