use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::copula::{feasible_range, latent_correlation, normal_quantile};
use super::{Result, WorldError};

const BOUNDARY_TOL: f64 = 1e-9;
const LATENT_TOL: f64 = 1e-9;

/// Explicit joint distribution over success patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub outcomes: Vec<(Vec<bool>, f64)>,
}

impl JointTable {
    pub fn new(outcomes: Vec<(Vec<bool>, f64)>) -> Result<Self> {
        let k = outcomes.first().map(|(b, _)| b.len()).unwrap_or(0);
        if k == 0 {
            return Err(WorldError::InvalidPopulation("joint table is empty".into()));
        }
        if outcomes.iter().any(|(b, m)| b.len() != k || *m < 0.0) {
            return Err(WorldError::InvalidPopulation(
                "joint table rows must share a width and have nonnegative mass".into(),
            ));
        }
        let total: f64 = outcomes.iter().map(|(_, m)| m).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(WorldError::InvalidPopulation(format!(
                "joint table mass sums to {total}"
            )));
        }
        Ok(Self { outcomes })
    }

    /// Every pattern with exactly one success, uniformly.
    pub fn exactly_one(k: usize) -> Self {
        let outcomes = (0..k)
            .map(|i| ((0..k).map(|j| j == i).collect(), 1.0 / k as f64))
            .collect();
        Self { outcomes }
    }

    pub fn width(&self) -> usize {
        self.outcomes[0].0.len()
    }

    fn marginal(&self, i: usize) -> f64 {
        self.outcomes.iter().filter(|(b, _)| b[i]).map(|(_, m)| m).sum()
    }

    fn pair(&self, i: usize, j: usize) -> f64 {
        self.outcomes.iter().filter(|(b, _)| b[i] && b[j]).map(|(_, m)| m).sum()
    }
}

#[derive(Debug, Clone)]
enum Construction {
    Independent,
    Copula { chol: DMatrix<f64>, thresholds: Vec<f64> },
    Comonotone,
    Countermonotone,
    Table(JointTable),
}

/// `k` proposers with marginal success rates and pairwise success correlations.
#[derive(Debug, Clone)]
pub struct AgentPopulation {
    marginals: Vec<f64>,
    corr: Vec<Vec<f64>>,
    construction: Construction,
}

impl AgentPopulation {
    /// Independent agents with common success rate `p`.
    pub fn iid(k: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; k], identity(k))
    }

    /// Common success rate `p`, every pair correlated at `rho`.
    pub fn exchangeable(k: usize, p: f64, rho: f64) -> Result<Self> {
        let mut corr = identity(k);
        for (i, row) in corr.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v = rho;
                }
            }
        }
        Self::new(vec![p; k], corr)
    }

    pub fn new(marginals: Vec<f64>, corr: Vec<Vec<f64>>) -> Result<Self> {
        let k = marginals.len();
        if k == 0 {
            return Err(WorldError::InvalidPopulation("no agents".into()));
        }
        if let Some(&p) = marginals.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(WorldError::InvalidPopulation(format!("marginal {p} is outside (0, 1)")));
        }
        if corr.len() != k || corr.iter().any(|row| row.len() != k) {
            return Err(WorldError::InvalidPopulation(format!(
                "correlation matrix must be {k}x{k}"
            )));
        }
        let mut at_upper = true;
        let mut at_lower = true;
        let mut any_nonzero = false;
        for i in 0..k {
            if (corr[i][i] - 1.0).abs() > 1e-12 {
                return Err(WorldError::InvalidPopulation(format!(
                    "diagonal entry {i} is {}",
                    corr[i][i]
                )));
            }
            for j in i + 1..k {
                let rho = corr[i][j];
                if (rho - corr[j][i]).abs() > 1e-12 {
                    return Err(WorldError::InvalidPopulation(format!(
                        "correlation matrix is not symmetric at ({i}, {j})"
                    )));
                }
                let (lo, hi) = feasible_range(marginals[i], marginals[j]);
                if rho < lo - BOUNDARY_TOL || rho > hi + BOUNDARY_TOL {
                    return Err(WorldError::InfeasibleCorrelation {
                        i,
                        j,
                        rho,
                        min: lo,
                        max: hi,
                    });
                }
                at_upper &= (rho - hi).abs() <= BOUNDARY_TOL;
                at_lower &= (rho - lo).abs() <= BOUNDARY_TOL;
                any_nonzero |= rho != 0.0;
            }
        }
        let construction = if k == 1 || !any_nonzero {
            Construction::Independent
        } else if at_upper {
            Construction::Comonotone
        } else if k == 2 && at_lower {
            Construction::Countermonotone
        } else {
            Self::copula(&marginals, &corr)?
        };
        Ok(Self {
            marginals,
            corr,
            construction,
        })
    }

    /// Population whose joint success law is given explicitly.
    pub fn from_joint_table(table: JointTable) -> Result<Self> {
        let k = table.width();
        let marginals: Vec<f64> = (0..k).map(|i| table.marginal(i)).collect();
        let mut corr = identity(k);
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let (pi, pj) = (marginals[i], marginals[j]);
                let sd = (pi * (1.0 - pi) * pj * (1.0 - pj)).sqrt();
                corr[i][j] = if sd > 0.0 {
                    (table.pair(i, j) - pi * pj) / sd
                } else {
                    0.0
                };
            }
        }
        Ok(Self {
            marginals,
            corr,
            construction: Construction::Table(table),
        })
    }

    fn copula(marginals: &[f64], corr: &[Vec<f64>]) -> Result<Construction> {
        let k = marginals.len();
        let mut latent = DMatrix::<f64>::identity(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let (lo, hi) = feasible_range(marginals[i], marginals[j]);
                let rho = corr[i][j];
                if (rho - lo).abs() <= BOUNDARY_TOL || (rho - hi).abs() <= BOUNDARY_TOL {
                    return Err(WorldError::BoundaryCorrelation { i, j, rho });
                }
                let r = latent_correlation(marginals[i], marginals[j], rho, LATENT_TOL);
                latent[(i, j)] = r;
                latent[(j, i)] = r;
            }
        }
        let chol = latent.cholesky().ok_or(WorldError::NotPositiveDefinite)?.l();
        Ok(Construction::Copula {
            chol,
            thresholds: marginals.iter().map(|&p| normal_quantile(p)).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn corr(&self) -> &[Vec<f64>] {
        &self.corr
    }

    /// Average off-diagonal correlation; zero for a single agent.
    pub fn rho_bar(&self) -> f64 {
        let k = self.k();
        if k < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                sum += self.corr[i][j];
            }
        }
        sum * 2.0 / (k * (k - 1)) as f64
    }

    /// One joint draw of success bits.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        match &self.construction {
            Construction::Independent => self.marginals.iter().map(|&p| rng.random::<f64>() < p).collect(),
            Construction::Copula { chol, thresholds } => {
                let eps = DVector::from_iterator(self.k(), (0..self.k()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let z = chol * eps;
                z.iter().zip(thresholds).map(|(z, t)| z < t).collect()
            }
            Construction::Comonotone => {
                let u: f64 = rng.random();
                self.marginals.iter().map(|&p| u < p).collect()
            }
            Construction::Countermonotone => {
                let u: f64 = rng.random();
                vec![u < self.marginals[0], u >= 1.0 - self.marginals[1]]
            }
            Construction::Table(table) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (bits, mass) in &table.outcomes {
                    acc += mass;
                    if u < acc {
                        return bits.clone();
                    }
                }
                table.outcomes.last().map(|(b, _)| b.clone()).unwrap_or_default()
            }
        }
    }

    /// `i,j,rho` rows for every ordered off-diagonal pair with `i < j`.
    pub fn correlation_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "j", "rho"])?;
        for i in 0..self.k() {
            for j in i + 1..self.k() {
                w.write_record([i.to_string(), j.to_string(), self.corr[i][j].to_string()])?;
            }
        }
        csv_string(w)
    }

    /// `i,p` rows.
    pub fn marginals_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "p"])?;
        for (i, p) in self.marginals.iter().enumerate() {
            w.write_record([i.to_string(), p.to_string()])?;
        }
        csv_string(w)
    }

    /// Rebuilds a population from the two CSV dumps.
    pub fn from_csv(marginals_csv: &str, correlation_csv: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct MarginalRow {
            i: usize,
            p: f64,
        }
        #[derive(Deserialize)]
        struct CorrRow {
            i: usize,
            j: usize,
            rho: f64,
        }
        let mut rows: Vec<MarginalRow> = csv::Reader::from_reader(marginals_csv.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.i);
        if rows.iter().enumerate().any(|(n, r)| n != r.i) {
            return Err(WorldError::InvalidPopulation("marginal indices must be 0..k".into()));
        }
        let marginals: Vec<f64> = rows.into_iter().map(|r| r.p).collect();
        let k = marginals.len();
        let mut corr = identity(k);
        for row in csv::Reader::from_reader(correlation_csv.as_bytes()).deserialize() {
            let row: CorrRow = row?;
            if row.i >= k || row.j >= k || row.i == row.j {
                return Err(WorldError::InvalidPopulation(format!(
                    "correlation entry ({}, {}) is out of range",
                    row.i, row.j
                )));
            }
            corr[row.i][row.j] = row.rho;
            corr[row.j][row.i] = row.rho;
        }
        Self::new(marginals, corr)
    }
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| WorldError::Csv(e.error().to_string()))?;
    String::from_utf8(bytes).map_err(|e| WorldError::Csv(e.to_string()))
}

/// Pearson correlation of 0/1 columns; `None` where a column is constant.
pub fn empirical_correlation(samples: &[Vec<bool>]) -> Result<Vec<Vec<Option<f64>>>> {
    if samples.len() < 2 {
        return Err(WorldError::TooFewSamples(samples.len()));
    }
    let k = samples[0].len();
    if samples.iter().any(|s| s.len() != k) {
        return Err(WorldError::InvalidPopulation("ragged sample matrix".into()));
    }
    let n = samples.len() as f64;
    let mut ones = vec![0u64; k];
    let mut both = vec![vec![0u64; k]; k];
    for row in samples {
        for i in 0..k {
            if row[i] {
                ones[i] += 1;
                for j in i..k {
                    if row[j] {
                        both[i][j] += 1;
                    }
                }
            }
        }
    }
    let mean: Vec<f64> = ones.iter().map(|&c| c as f64 / n).collect();
    let var: Vec<f64> = mean.iter().map(|m| m * (1.0 - m)).collect();
    let mut out = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            if var[i] <= 0.0 || var[j] <= 0.0 {
                continue;
            }
            let value = if i == j {
                1.0
            } else {
                (both[i][j] as f64 / n - mean[i] * mean[j]) / (var[i] * var[j]).sqrt()
            };
            out[i][j] = Some(value);
            out[j][i] = Some(value);
        }
    }
    Ok(out)
}
