//! Monte Carlo estimators with percentile-bootstrap intervals, parameter
//! sweeps and Pareto frontiers over the simulated pipeline.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Aggregator, PipelineError, RunConfig, SimulatedWorld};
use crate::simworld::{sample_review, AgentPopulation, ReviewerModel, TaskModel, WorldSeed};

pub const DEFAULT_BOOTSTRAP_ITERS: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_TRIALS: u64 = 100_000;
const CHUNK: u64 = 4096;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(u64),
    #[error("confidence level {0} must lie in (0, 1)")]
    Level(f64),
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T> = std::result::Result<T, MonteCarloError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub level: f64,
}

impl EstimateWithCI {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    /// Binomial standard error of the point estimate.
    pub fn binomial_se(&self) -> f64 {
        (self.point * (1.0 - self.point) / self.n as f64).sqrt()
    }
}

fn check(n: u64, iters: usize, level: f64) -> Result<()> {
    if n < 2 {
        return Err(MonteCarloError::TooFewSamples(n));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MonteCarloError::Level(level));
    }
    if iters == 0 {
        return Err(MonteCarloError::NoResamples);
    }
    Ok(())
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn interval(point: f64, mut means: Vec<f64>, n: u64, level: f64) -> EstimateWithCI {
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    EstimateWithCI {
        point,
        ci_low: quantile(&means, alpha / 2.0).min(point),
        ci_high: quantile(&means, 1.0 - alpha / 2.0).max(point),
        n,
        level,
    }
}

/// Percentile bootstrap of the mean of `samples`.
pub fn bootstrap_ci<R: Rng + ?Sized>(samples: &[f64], iters: usize, level: f64, rng: &mut R) -> Result<EstimateWithCI> {
    let n = samples.len() as u64;
    check(n, iters, level)?;
    let point = samples.iter().sum::<f64>() / n as f64;
    let means = (0..iters)
        .map(|_| {
            let total: f64 = (0..samples.len())
                .map(|_| samples[rng.random_range(0..samples.len())])
                .sum();
            total / n as f64
        })
        .collect();
    Ok(interval(point, means, n, level))
}

/// Percentile bootstrap for 0/1 data given only the count of ones.
///
/// The number of ones in a resample of `n` bits with `successes` ones is
/// Binomial(`n`, `successes / n`), so each resample is one binomial draw.
pub fn bootstrap_ci_bits<R: Rng + ?Sized>(
    successes: u64,
    n: u64,
    iters: usize,
    level: f64,
    rng: &mut R,
) -> Result<EstimateWithCI> {
    check(n, iters, level)?;
    let point = successes as f64 / n as f64;
    let dist = Binomial::new(n, point).expect("point lies in [0, 1]");
    let means = (0..iters).map(|_| dist.sample(rng) as f64 / n as f64).collect();
    Ok(interval(point, means, n, level))
}

fn bits_ci(successes: u64, n: u64, seed: &WorldSeed, label: &str) -> Result<EstimateWithCI> {
    let mut rng = seed.stream(label, 0);
    bootstrap_ci_bits(successes, n, DEFAULT_BOOTSTRAP_ITERS, DEFAULT_LEVEL, &mut rng)
}

/// Counts gathered over a batch of simulated tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCounts {
    pub n: u64,
    pub covered: u64,
    pub correct: u64,
    pub correct_and_covered: u64,
    pub correct_reviewed: u64,
    pub correct_all_rejected: u64,
    pub tokens: u64,
}

impl BatchCounts {
    fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.covered += o.covered;
        self.correct += o.correct;
        self.correct_and_covered += o.correct_and_covered;
        self.correct_reviewed += o.correct_reviewed;
        self.correct_all_rejected += o.correct_all_rejected;
        self.tokens += o.tokens;
        self
    }

    /// `correct/n == (covered/n)·(correct_and_covered/covered)` holds as an
    /// identity of ratios exactly when no uncovered task was solved.
    pub fn identity_holds(&self) -> bool {
        self.correct == self.correct_and_covered
    }

    pub fn mean_tokens(&self) -> f64 {
        self.tokens as f64 / self.n as f64
    }
}

/// Runs tasks `0..trials` in parallel and tallies them.
pub fn run_batch(world: &SimulatedWorld, config: &RunConfig, trials: u64) -> Result<BatchCounts> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let res = world.run(config, i)?;
            let d = res.diagnostics.unwrap_or_default();
            let q = res.quality == Some(true);
            Ok(BatchCounts {
                n: 1,
                covered: u64::from(d.coverage),
                correct: u64::from(q),
                correct_and_covered: u64::from(q && d.coverage),
                correct_reviewed: u64::from(d.correct_reviewed),
                correct_all_rejected: u64::from(d.correct_all_rejected),
                tokens: res.ledger.total(),
            })
        })
        .try_reduce(BatchCounts::default, |a, b| Ok(a.merge(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityEstimate {
    pub counts: BatchCounts,
    pub mean_quality: EstimateWithCI,
    pub coverage: EstimateWithCI,
    /// Undefined when no task had a correct proposal.
    pub selection: Option<EstimateWithCI>,
    /// Fraction of reviewed correct proposals that every reviewer rejected.
    pub all_reject: Option<EstimateWithCI>,
    pub identity_holds: bool,
}

/// Mean quality, coverage and conditional selection accuracy of a simulated
/// configuration, with the multiplicative identity checked on the counts.
pub fn estimate_identity(world: &SimulatedWorld, config: &RunConfig, trials: u64) -> Result<IdentityEstimate> {
    let c = run_batch(world, config, trials)?;
    let seed = &config.seed;
    let selection = if c.covered >= 2 {
        Some(bits_ci(c.correct_and_covered, c.covered, seed, "mc.ci.selection")?)
    } else {
        None
    };
    let all_reject = if c.correct_reviewed >= 2 {
        Some(bits_ci(
            c.correct_all_rejected,
            c.correct_reviewed,
            seed,
            "mc.ci.reject",
        )?)
    } else {
        None
    };
    Ok(IdentityEstimate {
        counts: c,
        mean_quality: bits_ci(c.correct, c.n, seed, "mc.ci.quality")?,
        coverage: bits_ci(c.covered, c.n, seed, "mc.ci.coverage")?,
        selection,
        all_reject,
        identity_holds: c.identity_holds(),
    })
}

/// Frequency with which all `k − 1` reviewers reject a correct candidate.
pub fn estimate_selection_error(k: u32, eps0: f64, trials: u64, seed: &WorldSeed) -> Result<EstimateWithCI> {
    if k < 2 {
        return Err(MonteCarloError::Grid("selection error needs k >= 2".into()));
    }
    let model = ReviewerModel::new(eps0, k - 1).map_err(PipelineError::from)?;
    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.stream("mc.selection", c);
            let len = CHUNK.min(trials - c * CHUNK);
            (0..len)
                .filter(|_| (0..k - 1).all(|_| !sample_review(&model, true, &mut rng)))
                .count() as u64
        })
        .sum();
    bits_ci(hits, trials, seed, "mc.ci.selection_error")
}

/// Frequency of at least one success among draws from `pop`.
pub fn estimate_coverage(pop: &AgentPopulation, trials: u64, seed: &WorldSeed) -> Result<EstimateWithCI> {
    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.stream("mc.coverage", c);
            let len = CHUNK.min(trials - c * CHUNK);
            (0..len).filter(|_| pop.sample(&mut rng).into_iter().any(|b| b)).count() as u64
        })
        .sum();
    bits_ci(hits, trials, seed, "mc.ci.coverage")
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: u32,
    pub r: u32,
    pub s: u32,
    pub p: f64,
    pub eps0: f64,
    pub rho: f64,
    pub m: u32,
    pub aggregator: Aggregator,
}

impl Default for SweepCell {
    fn default() -> Self {
        Self {
            k: 3,
            r: 1,
            s: 3,
            p: 0.4,
            eps0: 0.2,
            rho: 0.0,
            m: 1,
            aggregator: Aggregator::Prism,
        }
    }
}

impl SweepCell {
    pub fn id(&self) -> String {
        format!(
            "{}:k{}r{}s{}:p{}e{}rho{}m{}",
            self.aggregator, self.k, self.r, self.s, self.p, self.eps0, self.rho, self.m
        )
    }

    pub fn world(&self) -> Result<SimulatedWorld> {
        let world = SimulatedWorld::standard(self.k, self.p, self.rho, self.eps0)?;
        let task =
            TaskModel::new(self.p, self.m, world.task.incorrect_variants.max(self.m)).map_err(PipelineError::from)?;
        Ok(world.with_task(task))
    }

    pub fn config(&self, base: &RunConfig) -> RunConfig {
        RunConfig {
            k_proposers: self.k,
            r_reviewers: self.r,
            s_synth_iters: self.s,
            aggregator: self.aggregator,
            ..base.clone()
        }
    }
}

/// Axes to vary; an empty axis keeps the base cell's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub k: Vec<u32>,
    pub r: Vec<u32>,
    pub s: Vec<u32>,
    pub p: Vec<f64>,
    pub eps0: Vec<f64>,
    pub rho: Vec<f64>,
    pub m: Vec<u32>,
    pub aggregator: Vec<Aggregator>,
    pub trials: u64,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(MonteCarloError::Grid("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Cartesian product in axis order k, r, s, p, eps0, rho, m, aggregator.
    pub fn cells(&self, base: &SweepCell) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &k in &axis(&self.k, base.k) {
            for &r in &axis(&self.r, base.r) {
                for &s in &axis(&self.s, base.s) {
                    for &p in &axis(&self.p, base.p) {
                        for &eps0 in &axis(&self.eps0, base.eps0) {
                            for &rho in &axis(&self.rho, base.rho) {
                                for &m in &axis(&self.m, base.m) {
                                    for &aggregator in &axis(&self.aggregator, base.aggregator) {
                                        out.push(SweepCell {
                                            k,
                                            r,
                                            s,
                                            p,
                                            eps0,
                                            rho,
                                            m,
                                            aggregator,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub mean: Option<EstimateWithCI>,
    pub tokens: Option<f64>,
    pub error: Option<String>,
}

/// Runs every cell with common random numbers (same seed per cell).
pub fn sweep(grid: &SweepGrid, base_cell: &SweepCell, base: &RunConfig) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    Ok(grid
        .cells(base_cell)
        .into_iter()
        .map(|cell| {
            let run = || -> Result<(EstimateWithCI, f64)> {
                let world = cell.world()?;
                let config = cell.config(base);
                let counts = run_batch(&world, &config, grid.trials)?;
                let ci = if counts.n >= 2 {
                    bits_ci(counts.correct, counts.n, &config.seed, "mc.ci.sweep")?
                } else {
                    let point = counts.correct as f64;
                    EstimateWithCI {
                        point,
                        ci_low: point,
                        ci_high: point,
                        n: counts.n,
                        level: DEFAULT_LEVEL,
                    }
                };
                Ok((ci, counts.mean_tokens()))
            };
            match run() {
                Ok((mean, tokens)) => SweepRow {
                    cell,
                    mean: Some(mean),
                    tokens: Some(tokens),
                    error: None,
                },
                Err(e) => {
                    log::warn!("sweep cell {} failed: {e}", cell.id());
                    SweepRow {
                        cell,
                        mean: None,
                        tokens: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,r,s,p,eps0,rho,m,aggregator,mean,ci_low,ci_high,tokens,error\n");
    for row in rows {
        let c = &row.cell;
        let (mean, lo, hi) = row
            .mean
            .map(|m| (m.point.to_string(), m.ci_low.to_string(), m.ci_high.to_string()))
            .unwrap_or_default();
        let tokens = row.tokens.map(|t| t.to_string()).unwrap_or_default();
        let error = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{mean},{lo},{hi},{tokens},{error}",
            c.k, c.r, c.s, c.p, c.eps0, c.rho, c.m, c.aggregator
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub config_id: String,
    pub quality: EstimateWithCI,
    pub cost: f64,
}

impl FrontierPoint {
    pub fn dominates(&self, other: &FrontierPoint) -> bool {
        let (c, q) = (self.cost, self.quality.point);
        let (oc, oq) = (other.cost, other.quality.point);
        c <= oc && q >= oq && (c < oc || q > oq)
    }
}

/// Points no other point dominates, ordered by cost.
pub fn pareto_frontier(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut sorted: Vec<&FrontierPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(b.quality.point.total_cmp(&a.quality.point))
    });
    let mut frontier: Vec<FrontierPoint> = Vec::new();
    for p in sorted {
        let keep = match frontier.last() {
            None => true,
            Some(last) => {
                p.quality.point > last.quality.point || (p.quality.point == last.quality.point && p.cost == last.cost)
            }
        };
        if keep {
            frontier.push(p.clone());
        }
    }
    frontier
}

pub fn frontier_points(rows: &[SweepRow]) -> Vec<FrontierPoint> {
    rows.iter()
        .filter_map(|r| {
            Some(FrontierPoint {
                config_id: r.cell.id(),
                quality: r.mean?,
                cost: r.tokens?,
            })
        })
        .collect()
}

pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut out = String::from("config,cost,quality\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.config_id, p.cost, p.quality.point);
    }
    out
}

/// Six single- and multi-dimension configurations and their gains over the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynergyReport {
    /// (label, K, R, S, mean quality)
    pub configs: Vec<(String, u32, u32, u32, EstimateWithCI)>,
    pub individual_gains: [f64; 3],
    pub joint_gain: f64,
    pub two_dim_gain: f64,
    pub gamma: f64,
}

/// Baseline (1,0,1); exploration (3,0,1); information (1,1,1);
/// aggregation (1,0,3); exploration+information (3,1,1); all three (3,1,3).
pub fn synergy_experiment(
    p: f64,
    eps0: f64,
    synth_success: f64,
    trials: u64,
    seed: &WorldSeed,
) -> Result<SynergyReport> {
    let specs = [
        ("baseline", 1, 0, 1),
        ("exploration", 3, 0, 1),
        ("information", 1, 1, 1),
        ("aggregation", 1, 0, 3),
        ("exploration+information", 3, 1, 1),
        ("full", 3, 1, 3),
    ];
    let mut configs = Vec::new();
    for (label, k, r, s) in specs {
        let world = SimulatedWorld::standard(k, p, 0.0, eps0)?.with_synthesis_success(synth_success);
        let config = RunConfig {
            k_proposers: k,
            r_reviewers: r,
            s_synth_iters: s,
            seed: seed.clone(),
            ..RunConfig::default()
        };
        let counts = run_batch(&world, &config, trials)?;
        configs.push((
            label.to_string(),
            k,
            r,
            s,
            bits_ci(counts.correct, counts.n, seed, "mc.ci.synergy")?,
        ));
    }
    let q: Vec<f64> = configs.iter().map(|c| c.4.point).collect();
    let individual_gains = [q[1] - q[0], q[2] - q[0], q[3] - q[0]];
    let joint_gain = q[5] - q[0];
    let gamma = crate::theory::synergy_coefficient(joint_gain, &individual_gains)
        .map_err(|e| MonteCarloError::Grid(e.to_string()))?;
    Ok(SynergyReport {
        configs,
        individual_gains,
        joint_gain,
        two_dim_gain: q[4] - q[0],
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(id: &str, cost: f64, q: f64) -> FrontierPoint {
        FrontierPoint {
            config_id: id.into(),
            quality: EstimateWithCI {
                point: q,
                ci_low: q,
                ci_high: q,
                n: 1,
                level: 0.95,
            },
            cost,
        }
    }

    #[test]
    fn constant_samples_have_zero_width() {
        let mut rng = WorldSeed::new(1).stream("t", 0);
        let ci = bootstrap_ci(&[0.7; 50], 200, 0.95, &mut rng).unwrap();
        assert!((ci.point - 0.7).abs() < 1e-12);
        assert_eq!(ci.width(), 0.0);
        let ci = bootstrap_ci_bits(50, 50, 200, 0.95, &mut rng).unwrap();
        assert_eq!(ci.width(), 0.0);
    }

    #[test]
    fn bootstrap_input_checks() {
        let mut rng = WorldSeed::new(1).stream("t", 0);
        assert!(bootstrap_ci(&[1.0], 10, 0.95, &mut rng).is_err());
        assert!(bootstrap_ci(&[1.0, 0.0], 10, 1.0, &mut rng).is_err());
        assert!(bootstrap_ci(&[1.0, 0.0], 0, 0.9, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_half_width_matches_normal_approximation() {
        let mut rng = WorldSeed::new(2).stream("t", 0);
        let samples: Vec<f64> = (0..10_000).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let ci = bootstrap_ci(&samples, 1000, 0.95, &mut rng).unwrap();
        let expected = 2.0 * 1.96 * 0.005;
        assert!((ci.width() - expected).abs() < 0.2 * expected, "width {}", ci.width());
        assert!(ci.ci_low <= ci.point && ci.point <= ci.ci_high);
    }

    #[test]
    fn bits_fast_path_matches_resampling() {
        let mut rng = WorldSeed::new(3).stream("t", 0);
        let samples: Vec<f64> = (0..5000).map(|i| f64::from(u8::from(i % 10 < 3))).collect();
        let slow = bootstrap_ci(&samples, 2000, 0.95, &mut rng).unwrap();
        let fast = bootstrap_ci_bits(1500, 5000, 2000, 0.95, &mut rng).unwrap();
        assert_eq!(slow.point, fast.point);
        assert!((slow.width() - fast.width()).abs() < 0.1 * slow.width());
    }

    #[test]
    fn empty_grid_is_one_baseline_cell() {
        let cells = SweepGrid {
            trials: 10,
            ..SweepGrid::default()
        }
        .cells(&SweepCell::default());
        assert_eq!(cells, vec![SweepCell::default()]);
        let grid = SweepGrid {
            k: vec![1, 2, 3],
            s: vec![1, 3],
            trials: 10,
            ..SweepGrid::default()
        };
        assert_eq!(grid.cells(&SweepCell::default()).len(), 6);
    }

    #[test]
    fn failing_cells_do_not_stop_the_sweep() {
        let grid = SweepGrid {
            p: vec![0.4, 1.5],
            trials: 100,
            ..SweepGrid::default()
        };
        let rows = sweep(&grid, &SweepCell::default(), &RunConfig::default()).unwrap();
        assert!(rows[0].error.is_none() && rows[1].error.is_some());
        assert!(sweep_csv(&rows).lines().count() == 3);
    }

    #[test]
    fn frontier_examples() {
        let one = [point("a", 1.0, 0.5)];
        assert_eq!(pareto_frontier(&one), one.to_vec());
        let f = pareto_frontier(&[point("a", 10.0, 0.8), point("b", 12.0, 0.79)]);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].config_id, "a");
        let ties = pareto_frontier(&[point("a", 1.0, 0.5), point("b", 1.0, 0.5), point("c", 1.0, 0.4)]);
        assert_eq!(ties.len(), 2);
    }

    #[test]
    fn selection_error_noiseless_is_zero() {
        let e = estimate_selection_error(3, 0.0, 1000, &WorldSeed::new(4)).unwrap();
        assert_eq!(e.point, 0.0);
    }
}
