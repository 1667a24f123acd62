//! Closed-form coverage, information, aggregation and performance formulas.
//!
//! Everything here is a pure function of its arguments. Entropies are in bits
//! and `0 · log 0` is taken as `0` throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("correlation {rho} is infeasible for Bernoulli({p}) pairs (minimum {min})")]
    InfeasibleCorrelation { rho: f64, p: f64, min: f64 },
    #[error("signal value '{0}' has zero probability")]
    DegenerateSignal(&'static str),
    #[error("majority vote needs an odd number of voters, got {0}")]
    EvenVoterCount(u32),
    #[error("execution-feedback efficiency {exec} is below textual-feedback efficiency {text}")]
    EfficiencyOrdering { exec: f64, text: f64 },
    #[error("sum of individual gains is zero")]
    ZeroDenominator,
}

pub type Result<T> = std::result::Result<T, TheoryError>;

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(TheoryError::Domain {
            name,
            value,
            expected: "0 < x < 1",
        })
    }
}

fn check_closed_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TheoryError::Domain {
            name,
            value,
            expected: "0 <= x <= 1",
        })
    }
}

fn check_count(name: &'static str, k: u32, min: u32) -> Result<()> {
    if k >= min {
        Ok(())
    } else {
        Err(TheoryError::Domain {
            name,
            value: f64::from(k),
            expected: if min == 1 { "k >= 1" } else { "k >= 2" },
        })
    }
}

/// `n choose 2` as a float.
fn pairs(k: u32) -> f64 {
    let k = f64::from(k);
    k * (k - 1.0) / 2.0
}

fn binomial(n: u32, j: u32) -> f64 {
    let j = j.min(n - j);
    (0..j).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Probability that at least one of `k` independent Bernoulli(`p`) agents succeeds.
pub fn iid_coverage(p: f64, k: u32) -> Result<f64> {
    check_open_unit("p", p)?;
    check_count("k", k, 1)?;
    Ok(1.0 - (1.0 - p).powi(k as i32))
}

/// Lower end of the admissible correlation range for two Bernoulli(`p`) variables.
pub fn min_feasible_correlation(p: f64) -> f64 {
    let q = 1.0 - p;
    (-p / q).max(-q / p)
}

/// Shift of the second-order inclusion–exclusion bound caused by an average
/// pairwise success correlation `rho_bar`: `-C(k,2) · rho_bar · p(1-p)`.
pub fn diversity_correction(p: f64, k: u32, rho_bar: f64) -> f64 {
    -pairs(k) * rho_bar * p * (1.0 - p)
}

/// Second-order (Bonferroni) lower bound on coverage for `k` agents with
/// common marginal `p` and average pairwise success correlation `rho_bar`,
/// clamped to `[0, 1]`.
pub fn diversity_coverage_lower_bound(p: f64, k: u32, rho_bar: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    check_count("k", k, 2)?;
    let min = min_feasible_correlation(p);
    if !(rho_bar >= min - 1e-12 && rho_bar <= 1.0) {
        return Err(TheoryError::InfeasibleCorrelation { rho: rho_bar, p, min });
    }
    let kf = f64::from(k);
    let raw = kf * p - pairs(k) * p * p + diversity_correction(p, k, rho_bar);
    Ok(raw.clamp(0.0, 1.0))
}

/// `x · log2 x` with the convention `0 · log 0 = 0`.
fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Shannon entropy in bits of a discrete distribution given by its masses.
pub fn entropy(masses: &[f64]) -> f64 {
    -masses.iter().map(|&m| xlog2x(m)).sum::<f64>()
}

pub fn binary_entropy(p: f64) -> Result<f64> {
    check_closed_unit("p", p)?;
    Ok(entropy(&[p, 1.0 - p]))
}

/// Binary feedback channel: quality prior plus false-positive / false-negative rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub prior_p: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

impl ChannelSpec {
    pub fn new(prior_p: f64, fp_rate: f64, fn_rate: f64) -> Result<Self> {
        let spec = Self {
            prior_p,
            fp_rate,
            fn_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("prior_p", self.prior_p)?;
        for (name, rate) in [("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(TheoryError::Domain {
                    name,
                    value: rate,
                    expected: "0 <= x < 1",
                });
            }
        }
        Ok(())
    }

    /// Joint mass `[q][s]`, `q` = true quality, `s` = 1 when the signal says "correct".
    pub fn joint(&self) -> [[f64; 2]; 2] {
        let p = self.prior_p;
        [
            [(1.0 - self.fp_rate) * (1.0 - p), self.fp_rate * (1.0 - p)],
            [self.fn_rate * p, (1.0 - self.fn_rate) * p],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelAnalysis {
    pub entropy_q: f64,
    pub mi: f64,
    /// `P(Q = 1 | signal = "correct")`.
    pub posterior_correct: f64,
    /// `P(Q = 1 | signal = "incorrect")`.
    pub posterior_incorrect: f64,
    pub cond_entropy: f64,
    pub bayes_error: f64,
}

/// Mutual information `I(Q; S)` in bits of a 2×2 joint `[q][s]`.
pub fn mutual_information(joint: &[[f64; 2]; 2]) -> f64 {
    let hq = entropy(&[joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]]);
    hq - conditional_entropy(joint)
}

/// `H(Q | S)` in bits of a 2×2 joint `[q][s]`; zero-mass signal values contribute nothing.
pub fn conditional_entropy(joint: &[[f64; 2]; 2]) -> f64 {
    (0..2)
        .map(|s| {
            let ps = joint[0][s] + joint[1][s];
            if ps <= 0.0 {
                0.0
            } else {
                ps * entropy(&[joint[0][s] / ps, joint[1][s] / ps])
            }
        })
        .sum()
}

/// Error of the MAP decision of `Q` from `S`.
pub fn bayes_error(joint: &[[f64; 2]; 2]) -> f64 {
    (0..2).map(|s| joint[0][s].min(joint[1][s])).sum()
}

pub fn channel_analysis(spec: &ChannelSpec) -> Result<ChannelAnalysis> {
    spec.validate()?;
    let joint = spec.joint();
    let p_correct = joint[0][1] + joint[1][1];
    let p_incorrect = joint[0][0] + joint[1][0];
    if p_correct <= 0.0 {
        return Err(TheoryError::DegenerateSignal("correct"));
    }
    if p_incorrect <= 0.0 {
        return Err(TheoryError::DegenerateSignal("incorrect"));
    }
    let entropy_q = entropy(&[spec.prior_p, 1.0 - spec.prior_p]);
    let cond_entropy = conditional_entropy(&joint);
    Ok(ChannelAnalysis {
        entropy_q,
        mi: entropy_q - cond_entropy,
        posterior_correct: joint[1][1] / p_correct,
        posterior_incorrect: joint[1][0] / p_incorrect,
        cond_entropy,
        bayes_error: bayes_error(&joint),
    })
}

/// Probability that a strict majority of `k` independent voters, each right
/// with probability `p_i`, is right.
pub fn vote_accuracy(p_i: f64, k: u32) -> Result<f64> {
    check_closed_unit("p_i", p_i)?;
    if k.is_multiple_of(2) {
        return Err(TheoryError::EvenVoterCount(k));
    }
    let need = k.div_ceil(2);
    Ok((need..=k)
        .map(|j| binomial(k, j) * p_i.powi(j as i32) * (1.0 - p_i).powi((k - j) as i32))
        .sum())
}

fn check_reviewer_error(eps0: f64) -> Result<()> {
    if eps0 > 0.0 && eps0 < 0.5 {
        Ok(())
    } else {
        Err(TheoryError::Domain {
            name: "reviewer_error",
            value: eps0,
            expected: "0 < x < 0.5",
        })
    }
}

/// Selection-efficiency floor `1 - eps0^(k-1)` with `k-1` independent reviewers.
pub fn prism_selection_bound(reviewer_error: f64, k: u32) -> Result<f64> {
    check_reviewer_error(reviewer_error)?;
    check_count("k", k, 2)?;
    Ok(1.0 - reviewer_error.powi(k as i32 - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub baseline_p: f64,
    pub k_proposers: u32,
    pub reviewer_error: f64,
    pub synth_iters: u32,
    pub rho_bar: f64,
}

impl BoundInputs {
    pub fn new(baseline_p: f64, k_proposers: u32, reviewer_error: f64, synth_iters: u32) -> Self {
        Self {
            baseline_p,
            k_proposers,
            reviewer_error,
            synth_iters,
            rho_bar: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("baseline_p", self.baseline_p)?;
        check_count("k_proposers", self.k_proposers, 1)?;
        check_count("synth_iters", self.synth_iters, 1)?;
        check_reviewer_error(self.reviewer_error)?;
        if !(-1.0..=1.0).contains(&self.rho_bar) {
            return Err(TheoryError::Domain {
                name: "rho_bar",
                value: self.rho_bar,
                expected: "-1 <= x <= 1",
            });
        }
        Ok(())
    }
}

/// Lower bound on expected output quality: coverage times selection floor.
///
/// The tightened form adds one factor of `eps0` per closed-loop synthesis
/// iteration. A single proposer has no reviewers, so its bound is the
/// baseline `p` itself.
pub fn performance_bound(inputs: &BoundInputs, tightened: bool) -> Result<f64> {
    inputs.validate()?;
    let BoundInputs {
        baseline_p: p,
        k_proposers: k,
        reviewer_error: eps0,
        synth_iters: s,
        ..
    } = *inputs;
    if k == 1 {
        return Ok(p);
    }
    let coverage = iid_coverage(p, k)?;
    let exponent = if tightened { k - 1 + s } else { k - 1 };
    Ok(coverage * (1.0 - eps0.powi(exponent as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBreakdown {
    pub coverage: f64,
    pub selection: f64,
    pub g_explore: f64,
    pub g_info: f64,
    pub g_aggr: f64,
    pub total_gain: f64,
}

impl GainBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.g_explore + self.g_info + self.g_aggr
    }

    /// Whether the realized gain is bounded by the sum of the three components.
    pub fn is_subadditive(&self) -> bool {
        self.total_gain <= self.component_sum() + 1e-12
    }
}

/// Splits the gain of a multi-agent system over a single agent with success
/// rate `baseline_p` into exploration, information and aggregation terms.
pub fn gain_decomposition(
    c_k: f64,
    eta_star_exec: f64,
    eta_star_text: f64,
    eta_actual: f64,
    eta_base: f64,
    baseline_p: f64,
) -> Result<GainBreakdown> {
    check_closed_unit("c_k", c_k)?;
    check_closed_unit("baseline_p", baseline_p)?;
    for (name, v) in [
        ("eta_star_exec", eta_star_exec),
        ("eta_star_text", eta_star_text),
        ("eta_actual", eta_actual),
        ("eta_base", eta_base),
    ] {
        check_closed_unit(name, v)?;
    }
    if eta_star_exec < eta_star_text {
        return Err(TheoryError::EfficiencyOrdering {
            exec: eta_star_exec,
            text: eta_star_text,
        });
    }
    let breakdown = GainBreakdown {
        coverage: c_k,
        selection: eta_actual,
        g_explore: c_k - baseline_p,
        g_info: c_k * (eta_star_exec - eta_star_text),
        g_aggr: c_k * (eta_actual - eta_base),
        total_gain: c_k * eta_actual - baseline_p,
    };
    debug_assert!(
        breakdown.g_info < 0.0 || breakdown.g_aggr < 0.0 || breakdown.is_subadditive(),
        "gain components must bound the total: {breakdown:?}"
    );
    Ok(breakdown)
}

/// Ratio of a jointly realized gain to the sum of single-dimension gains.
pub fn synergy_coefficient(joint_gain: f64, individual_gains: &[f64]) -> Result<f64> {
    let denom: f64 = individual_gains.iter().sum();
    if denom == 0.0 {
        return Err(TheoryError::ZeroDenominator);
    }
    Ok(joint_gain / denom)
}

/// Number of proposal, review and synthesis calls for `k` proposers
/// cross-reviewing each other and `t` synthesis iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub proposals: u64,
    pub reviews: u64,
    pub syntheses: u64,
}

impl CallCounts {
    pub fn full_cross_review(k: u64, t: u64) -> Self {
        Self {
            proposals: k,
            reviews: k * k.saturating_sub(1),
            syntheses: t,
        }
    }

    pub fn cost(&self, c_prop: u64, c_rev: u64, c_syn: u64) -> u64 {
        self.proposals * c_prop + self.reviews * c_rev + self.syntheses * c_syn
    }
}

/// Total token cost `k·c_prop + k(k-1)·c_rev + t·c_syn`.
pub fn token_cost(k: u64, t: u64, c_prop: u64, c_rev: u64, c_syn: u64) -> u64 {
    CallCounts::full_cross_review(k, t).cost(c_prop, c_rev, c_syn)
}

/// One row of the reference-value table emitted by `prism theory`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenRow {
    pub name: &'static str,
    pub p: Option<f64>,
    pub k: Option<u32>,
    pub eps0: Option<f64>,
    pub s: Option<u32>,
    pub rho: Option<f64>,
    pub value: f64,
}

impl GoldenRow {
    fn new(name: &'static str, value: f64) -> Self {
        Self {
            name,
            p: None,
            k: None,
            eps0: None,
            s: None,
            rho: None,
            value,
        }
    }
}

/// Reference values for the standard worked examples.
pub fn golden_table() -> Vec<GoldenRow> {
    let mut rows = Vec::new();
    for k in [1, 2, 3, 5, 10] {
        rows.push(GoldenRow {
            p: Some(0.4),
            k: Some(k),
            ..GoldenRow::new("iid_coverage", iid_coverage(0.4, k).unwrap())
        });
    }
    rows.push(GoldenRow {
        p: Some(0.4),
        ..GoldenRow::new("binary_entropy", binary_entropy(0.4).unwrap())
    });
    let text = channel_analysis(&ChannelSpec::new(0.4, 0.1, 0.15).unwrap()).unwrap();
    rows.push(GoldenRow {
        p: Some(0.4),
        ..GoldenRow::new("posterior_correct", text.posterior_correct)
    });
    rows.push(GoldenRow {
        p: Some(0.4),
        ..GoldenRow::new("channel_mi", text.mi)
    });
    rows.push(GoldenRow {
        p: Some(0.3),
        k: Some(5),
        ..GoldenRow::new("vote_accuracy", vote_accuracy(0.3, 5).unwrap())
    });
    for k in [3, 5] {
        rows.push(GoldenRow {
            k: Some(k),
            eps0: Some(0.2),
            ..GoldenRow::new("prism_selection_bound", prism_selection_bound(0.2, k).unwrap())
        });
    }
    let inputs = BoundInputs::new(0.4, 3, 0.2, 3);
    rows.push(GoldenRow {
        p: Some(0.4),
        k: Some(3),
        eps0: Some(0.2),
        ..GoldenRow::new("performance_bound", performance_bound(&inputs, false).unwrap())
    });
    rows.push(GoldenRow {
        p: Some(0.4),
        k: Some(3),
        eps0: Some(0.2),
        s: Some(3),
        ..GoldenRow::new("performance_bound_tightened", performance_bound(&inputs, true).unwrap())
    });
    rows.push(GoldenRow {
        p: Some(0.76),
        k: Some(3),
        rho: Some(-0.15),
        ..GoldenRow::new("diversity_correction", diversity_correction(0.76, 3, -0.15))
    });
    rows.push(GoldenRow::new(
        "synergy_coefficient",
        synergy_coefficient(8.6, &[5.2, 3.8, 0.8]).unwrap(),
    ));
    rows.push(GoldenRow {
        k: Some(3),
        s: Some(3),
        ..GoldenRow::new("token_cost_default", token_cost(3, 3, 800, 400, 1200) as f64)
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn coverage_golden_values() {
        assert!(close(iid_coverage(0.4, 1).unwrap(), 0.4, 1e-12));
        assert!(close(iid_coverage(0.4, 3).unwrap(), 0.784, 1e-12));
        assert!(close(iid_coverage(0.4, 10).unwrap(), 1.0 - 0.6f64.powi(10), 1e-15));
        assert!(close(iid_coverage(0.4, 10).unwrap(), 0.99395, 1e-5));
    }

    #[test]
    fn coverage_domain_errors() {
        assert!(iid_coverage(0.0, 3).is_err());
        assert!(iid_coverage(1.0, 3).is_err());
        assert!(iid_coverage(0.4, 0).is_err());
    }

    #[test]
    fn coverage_strictly_monotone_in_k() {
        for i in 1..100 {
            let p = f64::from(i) / 100.0;
            for k in 1..12 {
                let (a, b) = (iid_coverage(p, k).unwrap(), iid_coverage(p, k + 1).unwrap());
                // Strictness is only visible while the miss mass exceeds f64 resolution.
                if (1.0 - p).powi(k as i32) > 1e-12 {
                    assert!(b > a, "p={p} k={k}");
                } else {
                    assert!(b >= a);
                }
            }
        }
    }

    #[test]
    fn diversity_bound_two_independent_agents_is_exact() {
        let b = diversity_coverage_lower_bound(0.1, 2, 0.0).unwrap();
        assert!(close(b, 0.19, 1e-12));
    }

    #[test]
    fn diversity_correction_mbpp_example() {
        let c = diversity_correction(0.76, 3, -0.15);
        assert!(close(c, 3.0 * 0.15 * 0.76 * 0.24, 1e-12));
        assert!(close(c, 0.082, 1e-3));
    }

    #[test]
    fn negative_correlation_raises_the_bound() {
        let iid = diversity_coverage_lower_bound(0.3, 3, 0.0).unwrap();
        let neg = diversity_coverage_lower_bound(0.3, 3, -0.1).unwrap();
        assert!(neg > iid);
    }

    /// Exchangeable mixture: with probability `alpha` all agents copy one
    /// Bernoulli(p) draw, otherwise they are independent. Pairwise
    /// correlation is exactly `alpha`.
    fn mixture_joint(p: f64, k: usize, alpha: f64) -> Vec<(Vec<bool>, f64)> {
        (0..1usize << k)
            .map(|mask| {
                let bits: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
                let ones = bits.iter().filter(|&&b| b).count() as i32;
                let indep = p.powi(ones) * (1.0 - p).powi(k as i32 - ones);
                let copy = if ones == k as i32 {
                    p
                } else if ones == 0 {
                    1.0 - p
                } else {
                    0.0
                };
                (bits, alpha * copy + (1.0 - alpha) * indep)
            })
            .collect()
    }

    #[test]
    fn diversity_bound_matches_exhaustive_bonferroni() {
        let (p, k, rho) = (0.3, 3usize, 0.2);
        let joint = mixture_joint(p, k, rho);
        let total: f64 = joint.iter().map(|(_, m)| m).sum();
        assert!(close(total, 1.0, 1e-12));
        let s1: f64 = (0..k)
            .map(|i| joint.iter().filter(|(b, _)| b[i]).map(|(_, m)| m).sum::<f64>())
            .sum();
        let mut s2 = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                s2 += joint.iter().filter(|(b, _)| b[i] && b[j]).map(|(_, m)| m).sum::<f64>();
            }
        }
        let bound = diversity_coverage_lower_bound(p, k as u32, rho).unwrap();
        assert!(close(bound, s1 - s2, 1e-12));
        let iid = diversity_coverage_lower_bound(p, k as u32, 0.0).unwrap();
        assert!(close(iid - bound, 0.126, 1e-12));
        let union: f64 = joint.iter().filter(|(b, _)| b.iter().any(|&x| x)).map(|(_, m)| m).sum();
        assert!(bound <= union + 1e-12);
    }

    #[test]
    fn infeasible_correlation_is_rejected() {
        // p = 0.76: minimum feasible correlation is -(0.24/0.76).
        let min = min_feasible_correlation(0.76);
        assert!(close(min, -0.24 / 0.76, 1e-15));
        assert!(matches!(
            diversity_coverage_lower_bound(0.76, 3, -0.5),
            Err(TheoryError::InfeasibleCorrelation { .. })
        ));
        assert!(diversity_coverage_lower_bound(0.76, 1, 0.0).is_err());
    }

    #[test]
    fn binary_entropy_values() {
        assert!(close(binary_entropy(0.5).unwrap(), 1.0, 1e-15));
        assert!(close(binary_entropy(0.4).unwrap(), 0.971, 1e-3));
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!(binary_entropy(1.2).is_err());
        for i in 0..=100 {
            let p = f64::from(i) / 100.0;
            let h = binary_entropy(p).unwrap();
            assert!(close(h, binary_entropy(1.0 - p).unwrap(), 1e-12));
            assert!(h <= 1.0);
        }
    }

    #[test]
    fn channel_text_feedback_example() {
        let a = channel_analysis(&ChannelSpec::new(0.4, 0.1, 0.15).unwrap()).unwrap();
        assert!(close(a.posterior_correct, 0.85, 1e-9));
        assert!(close(a.mi, 0.446, 1e-3));
        assert!(close(a.cond_entropy, a.entropy_q - a.mi, 1e-12));
        assert!(a.bayes_error <= a.cond_entropy);
    }

    #[test]
    fn noiseless_channel_carries_full_information() {
        let a = channel_analysis(&ChannelSpec::new(0.4, 0.0, 0.0).unwrap()).unwrap();
        assert!(close(a.mi, a.entropy_q, 1e-12));
        assert!(close(a.mi, 0.971, 1e-3));
        assert_eq!(a.bayes_error, 0.0);
    }

    #[test]
    fn channel_spec_rejects_bad_rates() {
        assert!(ChannelSpec::new(0.0, 0.1, 0.1).is_err());
        assert!(ChannelSpec::new(0.4, 1.0, 0.1).is_err());
        assert!(ChannelSpec::new(0.4, 0.1, -0.1).is_err());
    }

    #[test]
    fn vote_accuracy_values() {
        assert!(close(vote_accuracy(0.5, 3).unwrap(), 0.5, 1e-12));
        let exact = 10.0 * 0.027 * 0.49 + 5.0 * 0.0081 * 0.7 + 0.00243;
        assert!(close(vote_accuracy(0.3, 5).unwrap(), exact, 1e-12));
        assert!(close(exact, 0.16308, 1e-12));
        assert!(vote_accuracy(0.3, 5).unwrap() < 0.3);
        assert_eq!(vote_accuracy(0.3, 4), Err(TheoryError::EvenVoterCount(4)));
    }

    #[test]
    fn vote_degrades_below_half() {
        for step in 1..=9 {
            let p = f64::from(step) * 0.05;
            for k in [3, 5, 7, 9] {
                assert!(vote_accuracy(p, k).unwrap() < p, "p={p} k={k}");
            }
        }
    }

    #[test]
    fn selection_bound_values() {
        assert!(close(prism_selection_bound(0.2, 3).unwrap(), 0.96, 1e-12));
        assert!(close(prism_selection_bound(0.3, 2).unwrap(), 0.7, 1e-12));
        assert!(close(prism_selection_bound(0.2, 5).unwrap(), 0.9984, 1e-12));
        assert!(prism_selection_bound(0.5, 3).is_err());
        assert!(prism_selection_bound(0.2, 1).is_err());
    }

    #[test]
    fn performance_bound_values() {
        let inputs = BoundInputs::new(0.4, 3, 0.2, 3);
        assert!(close(performance_bound(&inputs, false).unwrap(), 0.75264, 1e-12));
        assert!(close(
            performance_bound(&inputs, true).unwrap(),
            0.784 * (1.0 - 0.2f64.powi(5)),
            1e-12
        ));
        assert!(close(performance_bound(&inputs, true).unwrap(), 0.78375, 1e-5));
        let single = BoundInputs::new(0.4, 1, 0.3, 2);
        assert_eq!(performance_bound(&single, false).unwrap(), 0.4);
        assert_eq!(performance_bound(&single, true).unwrap(), 0.4);
    }

    #[test]
    fn performance_bound_ordering() {
        for pi in 1..10 {
            let p = f64::from(pi) / 10.0;
            for k in 1..6 {
                for s in 1..4 {
                    let inputs = BoundInputs::new(p, k, 0.25, s);
                    let loose = performance_bound(&inputs, false).unwrap();
                    let tight = performance_bound(&inputs, true).unwrap();
                    assert!(tight >= loose && loose >= 0.0);
                    assert!(tight <= iid_coverage(p, k).unwrap() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn gain_decomposition_examples() {
        let g = gain_decomposition(0.784, 1.0, 1.0, 1.0, 1.0, 0.4).unwrap();
        assert!(close(g.total_gain, 0.384, 1e-12));
        assert!(close(g.total_gain, g.g_explore, 1e-12));

        let g = gain_decomposition(0.4, 0.7, 0.7, 1.0, 1.0, 0.4).unwrap();
        assert!(close(g.total_gain, 0.0, 1e-12) && close(g.g_explore, 0.0, 1e-12));

        let g = gain_decomposition(0.9, 1.0, 0.8, 0.95, 1.0 / 3.0, 0.4).unwrap();
        assert!(close(g.total_gain, 0.455, 1e-12));
        assert!(close(g.g_explore, 0.5, 1e-12));
        assert!(g.is_subadditive());
        assert!(close(g.total_gain + 0.4, g.coverage * g.selection, 1e-15));

        assert!(matches!(
            gain_decomposition(0.9, 0.7, 0.8, 0.9, 0.5, 0.4),
            Err(TheoryError::EfficiencyOrdering { .. })
        ));
    }

    #[test]
    fn synergy_values() {
        assert!(close(synergy_coefficient(8.6, &[5.2, 3.8, 0.8]).unwrap(), 0.878, 1e-3));
        assert_eq!(synergy_coefficient(0.3, &[0.3]).unwrap(), 1.0);
        assert!(close(
            synergy_coefficient(0.10, &[0.06, 0.05, 0.02]).unwrap(),
            0.769,
            1e-3
        ));
        assert_eq!(
            synergy_coefficient(1.0, &[0.5, -0.5]),
            Err(TheoryError::ZeroDenominator)
        );
    }

    #[test]
    fn token_cost_values() {
        assert_eq!(
            CallCounts::full_cross_review(3, 3),
            CallCounts {
                proposals: 3,
                reviews: 6,
                syntheses: 3
            }
        );
        assert_eq!(token_cost(1, 0, 123, 7, 9), 123);
        assert_eq!(token_cost(4, 2, 100, 50, 200), 1400);
    }

    #[test]
    fn golden_table_covers_examples() {
        let rows = golden_table();
        let find = |name: &str| rows.iter().find(|r| r.name == name).unwrap().value;
        assert!(close(find("performance_bound"), 0.75264, 1e-12));
        assert!(close(find("prism_selection_bound"), 0.96, 1e-12));
    }
}
