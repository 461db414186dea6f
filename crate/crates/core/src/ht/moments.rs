use serde::{Deserialize, Serialize};

use super::PairTables;
use crate::data::PotentialOutcomeTable;
use crate::design::{AssignmentRealization, StepWedgeDesign};

/// Randomization mean and variance of the HT estimator under a fixed potential-outcome table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub var_treated: f64,
    pub var_control: f64,
    pub covariance: f64,
}

/// Closed-form moments from per-cell potential totals, indexed `[i * (J+2) + j]`.
pub fn exact_moments_from_totals(design: &StepWedgeDesign, treated: &[f64], control: &[f64], n: f64) -> Moments {
    let tables = PairTables::new(design);
    let width = design.num_rollout_periods() + 2;
    let cells: Vec<(usize, usize)> =
        (0..design.num_clusters()).flat_map(|i| (1..=design.num_rollout_periods()).map(move |j| (i, j))).collect();
    let (mut v1, mut v0, mut cov, mut mean) = (0.0, 0.0, 0.0, 0.0);
    for &(i, j) in &cells {
        let e = tables.propensity(j);
        let (t1, t0) = (treated[i * width + j], control[i * width + j]);
        mean += t1 - t0;
        v1 += (1.0 - e) / e * t1 * t1;
        v0 += e / (1.0 - e) * t0 * t0;
        cov -= t1 * t0;
        for &(k, l) in &cells {
            if (k, l) == (i, j) {
                continue;
            }
            let same = i == k;
            let f = tables.propensity(l);
            let (s1, s0) = (treated[k * width + l], control[k * width + l]);
            let p11 = tables.both_treated(same, j, l).unwrap_or(0.0);
            let p00 = tables.both_control(same, j, l).unwrap_or(0.0);
            let p10 = tables.treated_control(same, j, l).unwrap_or(0.0);
            v1 += (p11 - e * f) / (e * f) * t1 * s1;
            v0 += (p00 - (1.0 - e) * (1.0 - f)) / ((1.0 - e) * (1.0 - f)) * t0 * s0;
            cov += (p10 - e * (1.0 - f)) / (e * (1.0 - f)) * t1 * s0;
        }
    }
    let s = 1.0 / (n * n);
    let (v1, v0, cov) = (v1 * s, v0 * s, cov * s);
    Moments { mean: mean / n, variance: v1 + v0 - 2.0 * cov, var_treated: v1, var_control: v0, covariance: cov }
}

/// Moments of the unadjusted estimator at `λ₀`.
pub fn exact_moments(table: &PotentialOutcomeTable, lambda0: f64) -> Moments {
    let (t1, t0) = table.residual_cell_totals(lambda0);
    exact_moments_from_totals(table.design(), &t1, &t0, table.rollout_size() as f64)
}

/// The `I × I` matrix `c(i, l)`: cluster `i`'s contribution to the estimator when placed
/// `l`-th in the adoption queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltGrid {
    size: usize,
    values: Vec<f64>,
    /// Adoption period of each queue position.
    position_period: Vec<usize>,
}

impl CltGrid {
    pub fn build(table: &PotentialOutcomeTable, lambda0: f64) -> Self {
        let design = table.design();
        let (t1, t0) = table.residual_cell_totals(lambda0);
        Self::from_totals(design, &t1, &t0, table.rollout_size() as f64)
    }

    pub fn from_totals(design: &StepWedgeDesign, treated: &[f64], control: &[f64], n: f64) -> Self {
        let size = design.num_clusters();
        let rollout = design.num_rollout_periods();
        let width = rollout + 2;
        let position_period: Vec<usize> = (0..size).map(|l| design.position_period(l)).collect();
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            for (l, &start) in position_period.iter().enumerate() {
                let mut c = 0.0;
                for j in 1..=rollout {
                    let e = design.treated_by(j) as f64 / size as f64;
                    if j >= start {
                        c += treated[i * width + j] / e;
                    } else {
                        c -= control[i * width + j] / (1.0 - e);
                    }
                }
                values[i * size + l] = c / n;
            }
        }
        CltGrid { size, values, position_period }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `c(i, l)` with both indices 0-based.
    pub fn get(&self, cluster: usize, position: usize) -> f64 {
        self.values[cluster * self.size + position]
    }

    pub fn row_means(&self) -> Vec<f64> {
        (0..self.size).map(|i| (0..self.size).map(|l| self.get(i, l)).sum::<f64>() / self.size as f64).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.size).map(|l| (0..self.size).map(|i| self.get(i, l)).sum::<f64>() / self.size as f64).collect()
    }

    /// `(1/I) Σ_{i,l} c(i, l)`: the randomization mean of `Σ_i c(i, V_i)`, which is `τ_{λ₀}`.
    /// The plain average over all `I²` entries is this divided by `I`.
    pub fn overall_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.size as f64
    }

    /// `Σ_i c(i, V_i)` for any queue order consistent with the assignment.
    pub fn realization(&self, assignment: &AssignmentRealization) -> f64 {
        (0..self.size)
            .map(|i| {
                let a = assignment.adoption_time(i);
                let l = self.position_period.iter().position(|&p| p == a).expect("every adoption time has a queue position");
                self.get(i, l)
            })
            .sum()
    }
}
