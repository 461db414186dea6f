use serde::{Deserialize, Serialize};

use super::TrialDataset;
use crate::design::{AssignmentRealization, StepWedgeDesign};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplianceClass {
    Complier,
    AlwaysTaker,
    NeverTaker,
}

impl ComplianceClass {
    /// `(d(0), d(1))`.
    pub fn receipt(self) -> (bool, bool) {
        match self {
            ComplianceClass::Complier => (false, true),
            ComplianceClass::AlwaysTaker => (true, true),
            ComplianceClass::NeverTaker => (false, false),
        }
    }
}

/// Finite-population causal estimands over rollout individuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimands {
    pub tau: f64,
    pub lambda: f64,
    pub compliance_rate: f64,
}

/// Both potential outcomes for every individual, for simulation and exact checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeTable {
    design: StepWedgeDesign,
    covariate_names: Vec<String>,
    cluster: Vec<usize>,
    period: Vec<usize>,
    y0: Vec<f64>,
    y1: Vec<f64>,
    class: Vec<ComplianceClass>,
    x: Vec<f64>,
}

impl PotentialOutcomeTable {
    /// `x` is row-major with one row of `covariate_names.len()` values per individual.
    /// With `exclusion` set, always- and never-takers must have `y(1) = y(0)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        design: StepWedgeDesign,
        covariate_names: Vec<String>,
        cluster: Vec<usize>,
        period: Vec<usize>,
        y0: Vec<f64>,
        y1: Vec<f64>,
        class: Vec<ComplianceClass>,
        x: Vec<f64>,
        exclusion: bool,
    ) -> Result<Self> {
        let n = cluster.len();
        let p = covariate_names.len();
        if [period.len(), y0.len(), y1.len(), class.len()].iter().any(|&l| l != n) || x.len() != n * p {
            return Err(Error::Domain("potential-outcome columns have different lengths".into()));
        }
        let last = design.num_rollout_periods() + 1;
        for k in 0..n {
            if cluster[k] >= design.num_clusters() || period[k] > last {
                return Err(Error::Schema { row: k + 1, message: "cluster or period outside the design".into() });
            }
            if exclusion && class[k] != ComplianceClass::Complier && y0[k] != y1[k] {
                return Err(Error::Domain(format!("row {}: exclusion restriction violated", k + 1)));
            }
        }
        Ok(PotentialOutcomeTable { design, covariate_names, cluster, period, y0, y1, class, x })
    }

    pub fn design(&self) -> &StepWedgeDesign {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.y0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y0.is_empty()
    }

    pub fn cluster(&self, k: usize) -> usize {
        self.cluster[k]
    }

    pub fn period(&self, k: usize) -> usize {
        self.period[k]
    }

    pub fn y0(&self, k: usize) -> f64 {
        self.y0[k]
    }

    pub fn y1(&self, k: usize) -> f64 {
        self.y1[k]
    }

    pub fn class(&self, k: usize) -> ComplianceClass {
        self.class[k]
    }

    pub fn d0(&self, k: usize) -> f64 {
        f64::from(u8::from(self.class[k].receipt().0))
    }

    pub fn d1(&self, k: usize) -> f64 {
        f64::from(u8::from(self.class[k].receipt().1))
    }

    pub fn x(&self, k: usize) -> &[f64] {
        let p = self.covariate_names.len();
        &self.x[k * p..(k + 1) * p]
    }

    fn is_rollout(&self, k: usize) -> bool {
        (1..=self.design.num_rollout_periods()).contains(&self.period[k])
    }

    /// Observed data under one assignment: `y = z·y(1) + (1−z)·y(0)`, and `d` likewise.
    pub fn materialize(&self, assignment: &AssignmentRealization) -> TrialDataset {
        let n = self.len();
        let mut d = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for k in 0..n {
            if assignment.z(self.cluster[k], self.period[k]) {
                d.push(self.d1(k));
                y.push(self.y1[k]);
            } else {
                d.push(self.d0(k));
                y.push(self.y0[k]);
            }
        }
        TrialDataset::from_parts(
            self.design.clone(),
            self.covariate_names.clone(),
            assignment.clone(),
            self.cluster.clone(),
            self.period.clone(),
            d,
            y,
            self.x.clone(),
        )
    }

    /// `τ`, `λ` and the compliance rate over rollout individuals.
    pub fn true_estimands(&self) -> Result<Estimands> {
        let (mut dy, mut dd, mut n) = (0.0, 0.0, 0usize);
        for k in (0..self.len()).filter(|&k| self.is_rollout(k)) {
            dy += self.y1[k] - self.y0[k];
            dd += self.d1(k) - self.d0(k);
            n += 1;
        }
        if n == 0 {
            return Err(Error::Domain("no individuals in rollout periods".into()));
        }
        if dd == 0.0 {
            return Err(Error::RelevanceViolated);
        }
        let n = n as f64;
        Ok(Estimands { tau: dy / n, lambda: dy / dd, compliance_rate: dd / n })
    }

    /// Cluster-period totals of `y(a) − λ₀·d(a)` for both arms, indexed `[i * (J+2) + j]`.
    pub fn residual_cell_totals(&self, lambda0: f64) -> (Vec<f64>, Vec<f64>) {
        let width = self.design.num_rollout_periods() + 2;
        let cells = self.design.num_clusters() * width;
        let (mut treated, mut control) = (vec![0.0; cells], vec![0.0; cells]);
        for k in 0..self.len() {
            let c = self.cluster[k] * width + self.period[k];
            treated[c] += self.y1[k] - lambda0 * self.d1(k);
            control[c] += self.y0[k] - lambda0 * self.d0(k);
        }
        (treated, control)
    }

    /// Number of rollout individuals, `N`.
    pub fn rollout_size(&self) -> usize {
        (0..self.len()).filter(|&k| self.is_rollout(k)).count()
    }
}
