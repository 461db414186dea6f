//! Horvitz-Thompson estimation of the residualized ITT effect from cluster-period totals.
//!
//! Every quantity is carried as a `(Y part, D part)` pair so that the estimator is
//! `a − λb` and its variance estimator `q0 + q1λ + q2λ²` for any `λ`.

mod adjust;
mod moments;

use serde::{Deserialize, Serialize};

pub use adjust::{fit_adjustment, AdjustmentMode, AdjustmentModel, ArmModel};
pub use moments::{exact_moments, exact_moments_from_totals, CltGrid, Moments};

use crate::data::TrialDataset;
use crate::design::{PairProbabilities, StepWedgeDesign};
use crate::error::Result;
use crate::inference::{AffineStatistic, InferenceResult, Reference, TestOutcome, VarianceSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HtVariance {
    /// With the correction sums over structurally-zero joint probabilities.
    Conservative,
    /// Without them.
    Simplified,
}

impl HtVariance {
    pub fn label(self) -> &'static str {
        match self {
            HtVariance::Conservative => "ht-conservative",
            HtVariance::Simplified => "ht-simplified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HtSpec {
    /// `None` for the plain estimator.
    pub adjustment: Option<AdjustmentMode>,
    pub variance: HtVariance,
}

impl HtSpec {
    pub fn label(&self) -> &'static str {
        match self.adjustment {
            None => "ht",
            Some(AdjustmentMode::PrePostRollout) => "ht-adj-prepost",
            Some(AdjustmentMode::FullData) => "ht-adj-full",
        }
    }
}

/// Order-2 assignment probabilities in floating point, with exact structural zeros as `None`.
#[derive(Debug, Clone)]
pub struct PairTables {
    rollout: usize,
    propensity: Vec<f64>,
    // [distinct, same cluster], row-major over (j, k)
    both_treated: [Vec<Option<f64>>; 2],
    both_control: [Vec<Option<f64>>; 2],
    treated_control: [Vec<Option<f64>>; 2],
}

impl PairTables {
    pub fn new(design: &StepWedgeDesign) -> Self {
        Self::from_probabilities(&design.pair_probabilities())
    }

    pub fn from_probabilities(pp: &PairProbabilities) -> Self {
        let rollout = pp.num_rollout_periods();
        let table = |f: &dyn Fn(bool, usize, usize) -> crate::design::Probability| -> [Vec<Option<f64>>; 2] {
            [false, true].map(|same| {
                let mut v = Vec::with_capacity(rollout * rollout);
                for j in 1..=rollout {
                    for k in 1..=rollout {
                        let p = f(same, j, k);
                        v.push(if p.is_zero() { None } else { Some(p.value()) });
                    }
                }
                v
            })
        };
        PairTables {
            rollout,
            propensity: (1..=rollout).map(|j| pp.propensity(j).value()).collect(),
            both_treated: table(&|s, j, k| pp.both_treated(s, j, k)),
            both_control: table(&|s, j, k| pp.both_control(s, j, k)),
            treated_control: table(&|s, j, k| pp.treated_control(s, j, k)),
        }
    }

    pub fn num_rollout_periods(&self) -> usize {
        self.rollout
    }

    /// `e_j` for `j` in `1..=J`.
    pub fn propensity(&self, j: usize) -> f64 {
        self.propensity[j - 1]
    }

    fn at(t: &[Vec<Option<f64>>; 2], rollout: usize, same: bool, j: usize, k: usize) -> Option<f64> {
        t[same as usize][(j - 1) * rollout + (k - 1)]
    }

    pub fn both_treated(&self, same: bool, j: usize, k: usize) -> Option<f64> {
        Self::at(&self.both_treated, self.rollout, same, j, k)
    }

    pub fn both_control(&self, same: bool, j: usize, k: usize) -> Option<f64> {
        Self::at(&self.both_control, self.rollout, same, j, k)
    }

    pub fn treated_control(&self, same: bool, j: usize, k: usize) -> Option<f64> {
        Self::at(&self.treated_control, self.rollout, same, j, k)
    }
}

/// A rollout cluster-period with its (adjusted) residual total split into `Y` and `D` parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cell {
    pub cluster: usize,
    pub period: usize,
    pub treated: bool,
    pub u: (f64, f64),
}

/// Accumulates a bilinear form in `u(λ) = y − λd` as `q0 + q1 λ + q2 λ²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Quadratic {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Quadratic {
    pub fn add(&mut self, w: f64, a: (f64, f64), b: (f64, f64)) {
        self.q0 += w * a.0 * b.0;
        self.q1 -= w * (a.0 * b.1 + a.1 * b.0);
        self.q2 += w * a.1 * b.1;
    }

    pub fn scaled(self, s: f64) -> Self {
        Quadratic { q0: self.q0 * s, q1: self.q1 * s, q2: self.q2 * s }
    }

    pub fn plus(self, o: Self, s: f64) -> Self {
        Quadratic { q0: self.q0 + s * o.q0, q1: self.q1 + s * o.q1, q2: self.q2 + s * o.q2 }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        self.q0 + lambda * self.q1 + lambda * lambda * self.q2
    }
}

/// Both variance estimators, as quadratics in `λ`, scaled by `1/N²`.
pub(crate) fn variance_quadratics(cells: &[Cell], tables: &PairTables, n: f64) -> (Quadratic, Quadratic) {
    let m = cells.len();
    let (mut v1, mut v0, mut cov) = (Quadratic::default(), Quadratic::default(), Quadratic::default());
    let (mut corr1, mut corr0, mut corr_cov) = (Quadratic::default(), Quadratic::default(), Quadratic::default());
    // counts of structural-zero partners
    let mut zero11 = vec![0usize; m];
    let mut zero00 = vec![0usize; m];
    let mut zero10_first = vec![0usize; m];
    let mut zero10_second = vec![0usize; m];

    for (a, ca) in cells.iter().enumerate() {
        let ea = tables.propensity(ca.period);
        if ca.treated {
            v1.add((1.0 - ea) / (ea * ea), ca.u, ca.u);
        } else {
            v0.add(ea / ((1.0 - ea) * (1.0 - ea)), ca.u, ca.u);
        }
        for (b, cb) in cells.iter().enumerate() {
            let same = ca.cluster == cb.cluster;
            let (ja, jb) = (ca.period, cb.period);
            let p10 = tables.treated_control(same, ja, jb);
            if p10.is_none() {
                zero10_first[a] += 1;
                zero10_second[b] += 1;
            }
            if a == b {
                continue;
            }
            let eb = tables.propensity(jb);
            match tables.both_treated(same, ja, jb) {
                None => zero11[a] += 1,
                Some(p) if ca.treated && cb.treated => v1.add((p - ea * eb) / (p * ea * eb), ca.u, cb.u),
                _ => {}
            }
            match tables.both_control(same, ja, jb) {
                None => zero00[a] += 1,
                Some(p) if !ca.treated && !cb.treated => {
                    let (fa, fb) = (1.0 - ea, 1.0 - eb);
                    v0.add((p - fa * fb) / (p * fa * fb), ca.u, cb.u)
                }
                _ => {}
            }
            if let Some(p) = p10 {
                if ca.treated && !cb.treated {
                    let fb = 1.0 - eb;
                    cov.add((p - ea * fb) / (p * ea * fb), ca.u, cb.u);
                }
            }
        }
    }
    for (a, ca) in cells.iter().enumerate() {
        let ea = tables.propensity(ca.period);
        if ca.treated {
            // Σ over ordered zero pairs of [f(a) + f(b)] = Σ_a 2 n_a f(a), f = u²/(2e)
            corr1.add(zero11[a] as f64 / ea, ca.u, ca.u);
            corr_cov.add(-(zero10_first[a] as f64) / (2.0 * ea), ca.u, ca.u);
        } else {
            corr0.add(zero00[a] as f64 / (1.0 - ea), ca.u, ca.u);
            corr_cov.add(-(zero10_second[a] as f64) / (2.0 * (1.0 - ea)), ca.u, ca.u);
        }
    }
    let scale = 1.0 / (n * n);
    let simplified = v1.plus(v0, 1.0).plus(cov, -2.0);
    let conservative = simplified.plus(corr1, 1.0).plus(corr0, 1.0).plus(corr_cov, -2.0);
    (conservative.scaled(scale), simplified.scaled(scale))
}

/// Cluster-period pieces of one dataset, ready for estimation at any `λ`.
#[derive(Debug, Clone)]
pub struct HtFit {
    label: &'static str,
    n: f64,
    num_clusters: usize,
    /// `(Y, D)` parts of `τ̂`.
    tau: (f64, f64),
    conservative: Quadratic,
    simplified: Quadratic,
}

impl HtFit {
    /// Plain estimator when `model` is `None`, augmented otherwise.
    pub fn new(data: &TrialDataset, tables: &PairTables, model: Option<&AdjustmentModel>, label: &'static str) -> Self {
        let design = data.design();
        let width = design.num_rollout_periods() + 2;
        let g = model.map(|m| m.cell_sums(data));
        let n = data.rollout_size() as f64;
        let mut cells = Vec::with_capacity(design.num_clusters() * design.num_rollout_periods());
        let (mut ty, mut td) = (0.0, 0.0);
        for i in 0..design.num_clusters() {
            for j in 1..=design.num_rollout_periods() {
                let z = data.cell_z(i, j);
                let e = tables.propensity(j);
                let total = (data.cell_y_total(i, j), data.cell_d_total(i, j));
                let (g0, g1) = match &g {
                    Some([g0, g1]) => (g0[i * width + j], g1[i * width + j]),
                    None => ((0.0, 0.0), (0.0, 0.0)),
                };
                let own = if z { g1 } else { g0 };
                let u = (total.0 - own.0, total.1 - own.1);
                let w = if z { 1.0 / e } else { -1.0 / (1.0 - e) };
                ty += w * u.0 + g1.0 - g0.0;
                td += w * u.1 + g1.1 - g0.1;
                cells.push(Cell { cluster: i, period: j, treated: z, u });
            }
        }
        let (conservative, simplified) = variance_quadratics(&cells, tables, n);
        HtFit { label, n, num_clusters: design.num_clusters(), tau: (ty / n, td / n), conservative, simplified }
    }

    /// Fits the adjustment (if any) and the cell summaries for `spec`.
    pub fn fit(data: &TrialDataset, tables: &PairTables, spec: &HtSpec) -> Result<Self> {
        let model = spec.adjustment.map(|mode| fit_adjustment(data, mode)).transpose()?;
        Ok(Self::new(data, tables, model.as_ref(), spec.label()))
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn rollout_size(&self) -> f64 {
        self.n
    }

    /// `τ̂(λ₀)`.
    pub fn estimate(&self, lambda0: f64) -> f64 {
        self.tau.0 - lambda0 * self.tau.1
    }

    /// `(a, b)` with `τ̂(λ) = a − λb`.
    pub fn affine_coefficients(&self) -> (f64, f64) {
        self.tau
    }

    /// `(q0, q1, q2)` of the chosen variance estimator.
    pub fn variance_coefficients(&self, kind: HtVariance) -> (f64, f64, f64) {
        let q = self.quadratic(kind);
        (q.q0, q.q1, q.q2)
    }

    fn quadratic(&self, kind: HtVariance) -> Quadratic {
        match kind {
            HtVariance::Conservative => self.conservative,
            HtVariance::Simplified => self.simplified,
        }
    }

    pub fn variance(&self, lambda0: f64, kind: HtVariance) -> f64 {
        self.quadratic(kind).eval(lambda0)
    }

    pub fn statistic(&self, kind: HtVariance, reference: Reference) -> AffineStatistic {
        let q = self.quadratic(kind);
        AffineStatistic {
            intercept: self.tau.0,
            slope: self.tau.1,
            variance: VarianceSurface::Quadratic { q0: q.q0, q1: q.q1, q2: q.q2 },
            reference,
            df: self.num_clusters as f64 - 2.0,
        }
    }

    /// ITT test statistic on `Y` alone: the same estimator and variance with `D` ignored.
    pub fn itt_statistic(&self, kind: HtVariance, reference: Reference) -> AffineStatistic {
        let q = self.quadratic(kind);
        AffineStatistic {
            intercept: self.tau.0,
            slope: 0.0,
            variance: VarianceSurface::Quadratic { q0: q.q0, q1: 0.0, q2: 0.0 },
            reference,
            df: self.num_clusters as f64 - 2.0,
        }
    }
}

pub fn ht_estimate(data: &TrialDataset, lambda0: f64, spec: &HtSpec) -> Result<f64> {
    Ok(HtFit::fit(data, &PairTables::new(data.design()), spec)?.estimate(lambda0))
}

pub fn ht_variance(data: &TrialDataset, lambda0: f64, spec: &HtSpec) -> Result<f64> {
    Ok(HtFit::fit(data, &PairTables::new(data.design()), spec)?.variance(lambda0, spec.variance))
}

/// Test at `λ₀` against the standard normal.
pub fn ht_test(data: &TrialDataset, spec: &HtSpec, lambda0: f64) -> Result<TestOutcome> {
    HtFit::fit(data, &PairTables::new(data.design()), spec)?.statistic(spec.variance, Reference::Gaussian).test(lambda0)
}

/// Point estimate, test at 0, and the inverted confidence set.
pub fn ht_test_and_ci(data: &TrialDataset, spec: &HtSpec, alpha: f64) -> Result<InferenceResult> {
    let fit = HtFit::fit(data, &PairTables::new(data.design()), spec)?;
    let stat = fit.statistic(spec.variance, Reference::Gaussian);
    InferenceResult::from_statistic(&stat, spec.label(), spec.variance.label(), alpha)
}
