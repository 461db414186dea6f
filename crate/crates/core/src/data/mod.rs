//! Individual-level trial data validated against a design.

mod csv_io;
mod potential;

use crate::design::{AssignmentRealization, StepWedgeDesign};
use crate::error::{Error, Result};

pub use potential::{ComplianceClass, Estimands, PotentialOutcomeTable};

/// One input row before validation. `cluster` is the user's label.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub cluster: i64,
    pub period: usize,
    pub z: bool,
    pub d: f64,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Validated individual records. Clusters are re-indexed `0..I` in ascending label order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    design: StepWedgeDesign,
    cluster_labels: Vec<i64>,
    covariate_names: Vec<String>,
    cluster: Vec<usize>,
    period: Vec<usize>,
    z: Vec<bool>,
    d: Vec<f64>,
    y: Vec<f64>,
    x: Vec<f64>,
    assignment: AssignmentRealization,
    sizes: Vec<usize>,
    y_totals: Vec<f64>,
    d_totals: Vec<f64>,
}

impl TrialDataset {
    /// Validates records against the design. Row numbers in errors are 1-based.
    pub fn new(design: StepWedgeDesign, covariate_names: Vec<String>, records: Vec<Record>) -> Result<Self> {
        let p = covariate_names.len();
        let last = design.num_rollout_periods() + 1;
        let mut labels: Vec<i64> = Vec::new();
        for (k, r) in records.iter().enumerate() {
            let row = k + 1;
            if r.period > last {
                return Err(Error::Schema { row, message: format!("period {} outside 0..={last}", r.period) });
            }
            if r.period == 0 && r.z {
                return Err(Error::FixedPeriodViolation { row, period: 0, expected: 0 });
            }
            if r.period == last && !r.z {
                return Err(Error::FixedPeriodViolation { row, period: last, expected: 1 });
            }
            if r.d != 0.0 && r.d != 1.0 {
                return Err(Error::NonBinaryTreatment { row, value: r.d.to_string() });
            }
            if r.x.len() != p {
                return Err(Error::RaggedCovariates { row, expected: p, found: r.x.len() });
            }
            if !r.y.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema { row, message: "non-finite outcome or covariate".into() });
            }
            labels.push(r.cluster);
        }
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != design.num_clusters() {
            return Err(Error::InconsistentAssignment(format!(
                "the data has {} clusters, the design has {}",
                labels.len(),
                design.num_clusters()
            )));
        }
        let index_of = |label: i64| labels.binary_search(&label).expect("label collected above");

        // Per cluster: the latest control period and earliest treated period seen, with rows.
        let n_clusters = labels.len();
        let mut latest_control: Vec<Option<(usize, usize)>> = vec![None; n_clusters];
        let mut earliest_treated: Vec<Option<(usize, usize)>> = vec![None; n_clusters];
        let mut cell_z: Vec<Option<(bool, usize)>> = vec![None; n_clusters * (last + 1)];
        for (k, r) in records.iter().enumerate() {
            let row = k + 1;
            let i = index_of(r.cluster);
            let slot = &mut cell_z[i * (last + 1) + r.period];
            match *slot {
                Some((z, first_row)) if z != r.z => {
                    return Err(Error::NonConstantCell { cluster: r.cluster, period: r.period, rows: vec![first_row, row] })
                }
                Some(_) => {}
                None => *slot = Some((r.z, row)),
            }
            if r.z {
                if earliest_treated[i].is_none_or(|(p, _)| r.period < p) {
                    earliest_treated[i] = Some((r.period, row));
                }
            } else if latest_control[i].is_none_or(|(p, _)| r.period > p) {
                latest_control[i] = Some((r.period, row));
            }
        }
        for i in 0..n_clusters {
            if let (Some((tp, tr)), Some((cp, cr))) = (earliest_treated[i], latest_control[i]) {
                if tp < cp {
                    return Err(Error::NonStaggered {
                        cluster: labels[i],
                        treated_row: tr,
                        treated_period: tp,
                        control_row: cr,
                        control_period: cp,
                    });
                }
            }
        }
        // Adoption time of cluster i lies in (lo, hi].
        let windows: Vec<(usize, usize)> = (0..n_clusters)
            .map(|i| (latest_control[i].map_or(0, |(p, _)| p), earliest_treated[i].map_or(last, |(p, _)| p)))
            .collect();
        let adoption = match_adoption_times(&design, &windows).ok_or_else(|| {
            Error::InconsistentAssignment(format!(
                "no assignment with cohort sizes {:?} fits the observed z",
                (1..=last).map(|a| design.cohort_size(a)).collect::<Vec<_>>()
            ))
        })?;
        let assignment = AssignmentRealization::new(&design, adoption)?;

        let n = records.len();
        let mut data = TrialDataset {
            design,
            cluster_labels: labels.clone(),
            covariate_names,
            cluster: Vec::with_capacity(n),
            period: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            x: Vec::with_capacity(n * p),
            assignment,
            sizes: Vec::new(),
            y_totals: Vec::new(),
            d_totals: Vec::new(),
        };
        for r in records {
            data.cluster.push(index_of(r.cluster));
            data.period.push(r.period);
            data.z.push(r.z);
            data.d.push(r.d);
            data.y.push(r.y);
            data.x.extend_from_slice(&r.x);
        }
        data.summarize();
        if data.rollout_size() == 0 {
            return Err(Error::Domain("no records in rollout periods 1..=J".into()));
        }
        Ok(data)
    }

    /// Builds a dataset known to be consistent with `assignment`, skipping validation.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        design: StepWedgeDesign,
        covariate_names: Vec<String>,
        assignment: AssignmentRealization,
        cluster: Vec<usize>,
        period: Vec<usize>,
        d: Vec<f64>,
        y: Vec<f64>,
        x: Vec<f64>,
    ) -> Self {
        let z = cluster.iter().zip(&period).map(|(&i, &j)| assignment.z(i, j)).collect();
        let cluster_labels = (0..design.num_clusters() as i64).collect();
        let mut data = TrialDataset {
            design,
            cluster_labels,
            covariate_names,
            cluster,
            period,
            z,
            d,
            y,
            x,
            assignment,
            sizes: Vec::new(),
            y_totals: Vec::new(),
            d_totals: Vec::new(),
        };
        data.summarize();
        data
    }

    fn summarize(&mut self) {
        let cells = self.design.num_clusters() * (self.design.num_rollout_periods() + 2);
        self.sizes = vec![0; cells];
        self.y_totals = vec![0.0; cells];
        self.d_totals = vec![0.0; cells];
        for k in 0..self.len() {
            let c = self.cell(self.cluster[k], self.period[k]);
            self.sizes[c] += 1;
            self.y_totals[c] += self.y[k];
            self.d_totals[c] += self.d[k];
        }
    }

    fn cell(&self, cluster: usize, period: usize) -> usize {
        cluster * (self.design.num_rollout_periods() + 2) + period
    }

    pub fn design(&self) -> &StepWedgeDesign {
        &self.design
    }

    pub fn assignment(&self) -> &AssignmentRealization {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn cluster_labels(&self) -> &[i64] {
        &self.cluster_labels
    }

    pub fn cluster(&self, row: usize) -> usize {
        self.cluster[row]
    }

    pub fn period(&self, row: usize) -> usize {
        self.period[row]
    }

    pub fn z(&self, row: usize) -> bool {
        self.z[row]
    }

    pub fn d(&self, row: usize) -> f64 {
        self.d[row]
    }

    pub fn y(&self, row: usize) -> f64 {
        self.y[row]
    }

    pub fn x(&self, row: usize) -> &[f64] {
        let p = self.num_covariates();
        &self.x[row * p..(row + 1) * p]
    }

    pub fn is_rollout(&self, row: usize) -> bool {
        let j = self.period[row];
        j >= 1 && j <= self.design.num_rollout_periods()
    }

    /// Indices of records in periods `1..=J`.
    pub fn rollout_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_rollout(k)).collect()
    }

    /// `N_ij`.
    pub fn cell_size(&self, cluster: usize, period: usize) -> usize {
        self.sizes[self.cell(cluster, period)]
    }

    /// `N_j`, summed over clusters.
    pub fn period_size(&self, period: usize) -> usize {
        (0..self.design.num_clusters()).map(|i| self.cell_size(i, period)).sum()
    }

    /// `N`, the number of rollout records.
    pub fn rollout_size(&self) -> usize {
        (1..=self.design.num_rollout_periods()).map(|j| self.period_size(j)).sum()
    }

    /// `Σ_k y_ijk`.
    pub fn cell_y_total(&self, cluster: usize, period: usize) -> f64 {
        self.y_totals[self.cell(cluster, period)]
    }

    /// `Σ_k d_ijk`.
    pub fn cell_d_total(&self, cluster: usize, period: usize) -> f64 {
        self.d_totals[self.cell(cluster, period)]
    }

    /// Treatment indicator of a cluster-period.
    pub fn cell_z(&self, cluster: usize, period: usize) -> bool {
        self.assignment.z(cluster, period)
    }

    pub fn residualize(&self, lambda0: f64) -> ResidualizedView<'_> {
        ResidualizedView { data: self, lambda0 }
    }

    /// A copy with `y` replaced, keeping everything else.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Domain(format!("expected {} outcomes, found {}", self.len(), y.len())));
        }
        let mut out = self.clone();
        out.y = y;
        out.summarize();
        Ok(out)
    }
}

/// `Y − λ₀D`, evaluated lazily on top of stored totals.
#[derive(Debug, Clone, Copy)]
pub struct ResidualizedView<'a> {
    data: &'a TrialDataset,
    lambda0: f64,
}

impl ResidualizedView<'_> {
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn residual(&self, row: usize) -> f64 {
        self.data.y(row) - self.lambda0 * self.data.d(row)
    }

    /// `R̄_ij(λ₀) = R̄_ij(0) − λ₀ Σ_k d_ijk`.
    pub fn cell_total(&self, cluster: usize, period: usize) -> f64 {
        self.data.cell_y_total(cluster, period) - self.lambda0 * self.data.cell_d_total(cluster, period)
    }
}

/// Assigns each cluster an adoption time in its window `(lo, hi]` while filling every
/// cohort exactly. Slots are filled in time order, each going to the waiting cluster
/// whose window closes first; this greedy is exact for interval constraints.
fn match_adoption_times(design: &StepWedgeDesign, windows: &[(usize, usize)]) -> Option<Vec<usize>> {
    let last = design.num_rollout_periods() + 1;
    let mut adoption = vec![0usize; windows.len()];
    for a in 1..=last {
        for _ in 0..design.cohort_size(a) {
            let pick = (0..windows.len())
                .filter(|&i| adoption[i] == 0 && windows[i].0 < a && a <= windows[i].1)
                .min_by_key(|&i| (windows[i].1, i))?;
            adoption[pick] = a;
        }
        if (0..windows.len()).any(|i| adoption[i] == 0 && windows[i].1 <= a) {
            return None;
        }
    }
    Some(adoption)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(cluster: i64, period: usize, z: bool, d: f64, y: f64) -> Record {
        Record { cluster, period, z, d, y, x: vec![] }
    }

    fn toy() -> (StepWedgeDesign, Vec<Record>) {
        let design = StepWedgeDesign::new(3, vec![1, 2]).unwrap();
        let mut rows = Vec::new();
        // cluster 10 adopts at 1, cluster 20 at 2, cluster 30 at 3 (post-rollout)
        for (label, adopt) in [(10, 1), (20, 2), (30, 3)] {
            for j in 0..=3 {
                rows.push(rec(label, j, j >= adopt, 0.0, j as f64));
            }
        }
        (design, rows)
    }

    #[test]
    fn infers_assignment_and_sizes() {
        let (design, rows) = toy();
        let data = TrialDataset::new(design, vec![], rows).unwrap();
        assert_eq!(data.assignment().adoption_times(), &[1, 2, 3]);
        assert_eq!(data.rollout_size(), 6);
        assert_eq!(data.period_size(1), 3);
        assert_eq!(data.cell_size(2, 0), 1);
    }

    #[test]
    fn rejects_bad_rows() {
        let (design, mut rows) = toy();
        rows[0].z = true;
        assert!(matches!(TrialDataset::new(design.clone(), vec![], rows), Err(Error::FixedPeriodViolation { row: 1, .. })));

        let (_, mut rows) = toy();
        // cluster 10 treated at 1 but control at 2
        rows[2].z = false;
        assert!(matches!(TrialDataset::new(design.clone(), vec![], rows), Err(Error::NonStaggered { cluster: 10, .. })));

        let (_, mut rows) = toy();
        rows[1].d = 0.5;
        assert!(matches!(TrialDataset::new(design.clone(), vec![], rows), Err(Error::NonBinaryTreatment { row: 2, .. })));

        let (_, mut rows) = toy();
        rows[5].x = vec![1.0];
        assert!(matches!(TrialDataset::new(design.clone(), vec![], rows), Err(Error::RaggedCovariates { row: 6, .. })));

        let (_, mut rows) = toy();
        // two clusters adopting at period 1 contradicts I_1 = 1
        rows[5].z = true;
        assert!(matches!(TrialDataset::new(design, vec![], rows), Err(Error::InconsistentAssignment(_))));
    }

    #[test]
    fn residualization_is_affine() {
        let design = StepWedgeDesign::new(2, vec![1]).unwrap();
        let rows = vec![
            rec(0, 1, true, 1.0, 3.0),
            rec(0, 1, true, 0.0, 2.0),
            rec(0, 1, true, 1.0, 5.0),
            rec(1, 1, false, 0.0, 1.0),
        ];
        let data = TrialDataset::new(design, vec![], rows).unwrap();
        let view = data.residualize(1.0);
        let r: Vec<f64> = (0..3).map(|k| view.residual(k)).collect();
        assert_eq!(r, vec![2.0, 2.0, 4.0]);
        assert_eq!(view.cell_total(0, 1), 8.0);
        assert_eq!(data.residualize(0.0).residual(0), 3.0);
    }

    #[test]
    fn adoption_matching_resolves_missing_cells() {
        let design = StepWedgeDesign::new(3, vec![1, 2]).unwrap();
        // cluster 0 only observed in the post period; the others pin down cohorts 1 and 2
        let windows = [(0, 3), (0, 1), (1, 2)];
        assert_eq!(match_adoption_times(&design, &windows), Some(vec![3, 1, 2]));
        assert_eq!(match_adoption_times(&design, &[(0, 1), (0, 1), (0, 3)]), None);
    }
}
