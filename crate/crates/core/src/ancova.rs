//! Regression estimators of the residualized ITT effect with period-specific treatment
//! effects, cluster-robust variances, and test inversion for the effect ratio.
//!
//! `Y` and `D` are regressed once each on a shared design matrix; because least squares
//! is linear in the response, the fit of `Y − λD` is `β̂_Y − λβ̂_D` for every `λ`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::inference::{AffineStatistic, InferenceResult, IntervalSet, Reference, TestOutcome, VarianceSurface};
use crate::stats::linalg::{self, ClusterSandwich, SandwichKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AncovaFlavor {
    /// Period intercepts and period-specific treatment effects only.
    Unadjusted,
    /// Adds covariate main effects.
    AncovaI,
    /// Adds covariate main effects and treatment-by-centered-covariate interactions.
    AncovaIII,
}

/// How covariates are centered inside the interaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Subtract the period-specific mean over rollout records.
    #[default]
    PerPeriod,
    /// Subtract the mean over all rollout records.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AncovaSpec {
    pub flavor: AncovaFlavor,
    /// Covariate names to adjust for; `None` means all of them.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub centering: Centering,
}

impl AncovaSpec {
    pub fn new(flavor: AncovaFlavor) -> Self {
        AncovaSpec { flavor, covariates: None, centering: Centering::PerPeriod }
    }

    pub fn label(&self) -> &'static str {
        match self.flavor {
            AncovaFlavor::Unadjusted => "unadjusted",
            AncovaFlavor::AncovaI => "ancova1",
            AncovaFlavor::AncovaIII => "ancova3",
        }
    }

    fn covariate_indices(&self, data: &TrialDataset) -> Result<Vec<usize>> {
        if self.flavor == AncovaFlavor::Unadjusted {
            return Ok(vec![]);
        }
        let idx: Vec<usize> = match &self.covariates {
            None => (0..data.num_covariates()).collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    data.covariate_names()
                        .iter()
                        .position(|c| c == n)
                        .ok_or_else(|| Error::Config(format!("unknown covariate `{n}`")))
                })
                .collect::<Result<_>>()?,
        };
        if idx.is_empty() {
            return Err(Error::Config(format!("{} needs at least one covariate", self.label())));
        }
        Ok(idx)
    }
}

/// Two least-squares fits, of `Y` and of `D`, on one rollout-period design matrix.
pub struct RegressionFitPair {
    column_names: Vec<String>,
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    clusters: Vec<usize>,
    num_clusters: usize,
    num_periods: usize,
    beta_y: DVector<f64>,
    beta_d: Option<DVector<f64>>,
    resid_y: Vec<f64>,
    resid_d: Option<Vec<f64>>,
    /// `N_j / N` on the treatment-by-period coefficients.
    contrast: DVector<f64>,
}

/// Builds and fits the design. With `with_d` false only `Y` is fitted (the ITT path).
fn fit(data: &TrialDataset, spec: &AncovaSpec, with_d: bool) -> Result<RegressionFitPair> {
    let j_max = data.design().num_rollout_periods();
    let cov = spec.covariate_indices(data)?;
    let rows = data.rollout_rows();

    let mut treated = vec![0usize; j_max + 1];
    let mut control = vec![0usize; j_max + 1];
    for &k in &rows {
        if data.z(k) {
            treated[data.period(k)] += 1;
        } else {
            control[data.period(k)] += 1;
        }
    }
    for j in 1..=j_max {
        let reason = match (treated[j], control[j]) {
            (0, 0) => "no records",
            (0, _) => "no treated records",
            (_, 0) => "no control records",
            _ => continue,
        };
        return Err(Error::ThetaUnidentified { period: j, reason: reason.into() });
    }

    let q = cov.len();
    let interact = spec.flavor == AncovaFlavor::AncovaIII;
    let mut names: Vec<String> = (1..=j_max).map(|j| format!("period_{j}")).collect();
    names.extend((1..=j_max).map(|j| format!("treat_x_period_{j}")));
    names.extend(cov.iter().map(|&c| data.covariate_names()[c].clone()));
    if interact {
        names.extend(cov.iter().map(|&c| format!("treat_x_{}_centered", data.covariate_names()[c])));
    }

    // centering means, indexed [period][covariate]
    let mut means = vec![vec![0.0; q]; j_max + 1];
    if interact {
        let mut counts = vec![0usize; j_max + 1];
        for &k in &rows {
            let j = match spec.centering {
                Centering::PerPeriod => data.period(k),
                Centering::Pooled => 0,
            };
            counts[j] += 1;
            for (m, &c) in cov.iter().enumerate() {
                means[j][m] += data.x(k)[c];
            }
        }
        for j in 0..=j_max {
            if counts[j] > 0 {
                means[j].iter_mut().for_each(|v| *v /= counts[j] as f64);
            }
        }
        if spec.centering == Centering::Pooled {
            let pooled = means[0].clone();
            means.iter_mut().for_each(|m| m.clone_from(&pooled));
        }
    }

    let n = rows.len();
    let k_cols = names.len();
    let mut x = DMatrix::<f64>::zeros(n, k_cols);
    for (r, &k) in rows.iter().enumerate() {
        let j = data.period(k);
        let z = if data.z(k) { 1.0 } else { 0.0 };
        x[(r, j - 1)] = 1.0;
        x[(r, j_max + j - 1)] = z;
        for (m, &c) in cov.iter().enumerate() {
            let v = data.x(k)[c];
            x[(r, 2 * j_max + m)] = v;
            if interact {
                x[(r, 2 * j_max + q + m)] = z * (v - means[j][m]);
            }
        }
    }
    let gram = linalg::gram(&x, None);
    let chol = linalg::factor(&gram, &names)?;
    let solve = |resp: &DVector<f64>| -> (DVector<f64>, Vec<f64>) {
        let beta = chol.solve(&x.tr_mul(resp));
        let resid = (resp - &x * &beta).iter().copied().collect();
        (beta, resid)
    };
    let y = DVector::from_iterator(n, rows.iter().map(|&k| data.y(k)));
    let (beta_y, resid_y) = solve(&y);
    let (beta_d, resid_d) = if with_d {
        let d = DVector::from_iterator(n, rows.iter().map(|&k| data.d(k)));
        let (b, r) = solve(&d);
        (Some(b), Some(r))
    } else {
        (None, None)
    };

    let total = data.rollout_size() as f64;
    let mut contrast = DVector::<f64>::zeros(k_cols);
    for j in 1..=j_max {
        contrast[j_max + j - 1] = data.period_size(j) as f64 / total;
    }
    Ok(RegressionFitPair {
        column_names: names,
        x,
        gram,
        chol,
        clusters: rows.iter().map(|&k| data.cluster(k)).collect(),
        num_clusters: data.design().num_clusters(),
        num_periods: j_max,
        beta_y,
        beta_d,
        resid_y,
        resid_d,
        contrast,
    })
}

pub fn fit_ancova(data: &TrialDataset, spec: &AncovaSpec) -> Result<RegressionFitPair> {
    fit(data, spec, true)
}

impl RegressionFitPair {
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn beta_y(&self) -> &DVector<f64> {
        &self.beta_y
    }

    pub fn beta_d(&self) -> Option<&DVector<f64>> {
        self.beta_d.as_ref()
    }

    pub fn residuals_y(&self) -> &[f64] {
        &self.resid_y
    }

    pub fn residuals_d(&self) -> Option<&[f64]> {
        self.resid_d.as_deref()
    }

    /// `θ̂_{Y,j}` for `j = 1..=J`.
    pub fn theta_y(&self) -> Vec<f64> {
        self.beta_y.rows(self.num_periods, self.num_periods).iter().copied().collect()
    }

    pub fn theta_d(&self) -> Option<Vec<f64>> {
        self.beta_d.as_ref().map(|b| b.rows(self.num_periods, self.num_periods).iter().copied().collect())
    }

    /// `Σ_j N_j θ̂_{Y,j} / N`.
    pub fn tau_y(&self) -> f64 {
        self.contrast.dot(&self.beta_y)
    }

    /// `Σ_j N_j θ̂_{D,j} / N`, zero for a `Y`-only fit.
    pub fn tau_d(&self) -> f64 {
        self.beta_d.as_ref().map_or(0.0, |b| self.contrast.dot(b))
    }

    /// `τ̂(λ₀) = τ̂_Y − λ₀ τ̂_D`.
    pub fn tau_hat(&self, lambda0: f64) -> f64 {
        self.tau_y() - lambda0 * self.tau_d()
    }

    /// Per-cluster scores `(a_c, b_c)` with sandwich variance `Σ_c (a_c − λ b_c)²`.
    pub fn cluster_scores(&self, kind: SandwichKind) -> Result<(Vec<f64>, Vec<f64>)> {
        let sandwich = ClusterSandwich {
            x: &self.x,
            row_weights: None,
            bread: &self.gram,
            bread_chol: &self.chol,
            clusters: &self.clusters,
            num_clusters: self.num_clusters,
        };
        let mut residuals: Vec<&[f64]> = vec![&self.resid_y];
        if let Some(rd) = &self.resid_d {
            residuals.push(rd);
        }
        let mut scores = sandwich.contrast_scores(&self.contrast, &residuals, kind)?;
        let b = if scores.len() == 2 { scores.pop().unwrap() } else { vec![0.0; self.num_clusters] };
        let a = scores.pop().unwrap();
        Ok((a, b))
    }

    /// `S(λ)²` coefficients `(q0, q1, q2)`.
    pub fn variance_coefficients(&self, kind: SandwichKind) -> Result<(f64, f64, f64)> {
        let (a, b) = self.cluster_scores(kind)?;
        Ok(VarianceSurface::ClusterScores { a, b }.coefficients())
    }

    pub fn sandwich_variance(&self, lambda0: f64, kind: SandwichKind) -> Result<f64> {
        let (a, b) = self.cluster_scores(kind)?;
        Ok(VarianceSurface::ClusterScores { a, b }.eval(lambda0))
    }

    pub fn statistic(&self, kind: SandwichKind, reference: Reference) -> Result<AffineStatistic> {
        if self.num_clusters < 3 {
            return Err(Error::InsufficientRows { what: "cluster-robust variance (clusters)".into(), need: 3, found: self.num_clusters });
        }
        let (a, b) = self.cluster_scores(kind)?;
        Ok(AffineStatistic {
            intercept: self.tau_y(),
            slope: self.tau_d(),
            variance: VarianceSurface::ClusterScores { a, b },
            reference,
            df: self.num_clusters as f64 - 2.0,
        })
    }
}

/// Test of `H₀: λ = λ₀`.
pub fn test_lambda(
    data: &TrialDataset,
    spec: &AncovaSpec,
    lambda0: f64,
    kind: SandwichKind,
    reference: Reference,
) -> Result<TestOutcome> {
    fit_ancova(data, spec)?.statistic(kind, reference)?.test(lambda0)
}

/// Test of `H₀: τ = 0` from a fit of `Y` alone.
pub fn test_itt(data: &TrialDataset, spec: &AncovaSpec, kind: SandwichKind, reference: Reference) -> Result<TestOutcome> {
    fit(data, spec, false)?.statistic(kind, reference)?.test(0.0)
}

/// `λ̂ = Σ_j N_j θ̂_{Y,j} / Σ_j N_j θ̂_{D,j}`.
pub fn point_estimate(data: &TrialDataset, spec: &AncovaSpec) -> Result<f64> {
    let f = fit_ancova(data, spec)?;
    if f.tau_d() == 0.0 {
        return Err(Error::WeakFirstStage);
    }
    Ok(f.tau_y() / f.tau_d())
}

pub fn invert_ci(data: &TrialDataset, spec: &AncovaSpec, kind: SandwichKind, reference: Reference, alpha: f64) -> Result<IntervalSet> {
    fit_ancova(data, spec)?.statistic(kind, reference)?.interval(alpha)
}

pub fn analyze(data: &TrialDataset, spec: &AncovaSpec, kind: SandwichKind, reference: Reference, alpha: f64) -> Result<InferenceResult> {
    let stat = fit_ancova(data, spec)?.statistic(kind, reference)?;
    InferenceResult::from_statistic(&stat, spec.label(), kind.label(), alpha)
}
