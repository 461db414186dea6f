//! Reference computations that share no code with the library beyond its public types.

use num_rational::Ratio;
use swedge_core::ancova::{fit_ancova, AncovaFlavor, AncovaSpec};
use swedge_core::data::{PotentialOutcomeTable, TrialDataset};
use swedge_core::design::{Arm, AssignmentRealization, CellQuery, JointProbabilitySpec};
use swedge_core::ht::{CltGrid, HtFit, HtSpec, HtVariance, PairTables};
use swedge_core::inference::{IntervalSet, Reference};
use swedge_core::stats::dist;
use swedge_core::stats::linalg::SandwichKind;
use swedge_core::StepWedgeDesign;

use super::{brute_force_adoptions, small_designs, TestRng};
use swedge_core::data::ComplianceClass;

/// Per-cell bitsets over the brute-forced assignment list (at most 128 assignments).
pub struct CellMasks {
    pub total: u32,
    masks: Vec<[u128; 2]>,
    periods: usize,
}

impl CellMasks {
    pub fn new(design: &StepWedgeDesign) -> Self {
        let adoptions = brute_force_adoptions(design);
        assert!(adoptions.len() <= 128, "too many assignments for a u128 mask");
        let periods = design.num_rollout_periods();
        let mut masks = vec![[0u128; 2]; design.num_clusters() * periods];
        for (bit, a) in adoptions.iter().enumerate() {
            for (i, &adopt) in a.iter().enumerate() {
                for j in 1..=periods {
                    let treated = usize::from(adopt <= j);
                    masks[i * periods + j - 1][treated] |= 1u128 << bit;
                }
            }
        }
        CellMasks { total: adoptions.len() as u32, masks, periods }
    }

    pub fn frequency(&self, cells: &[CellQuery]) -> Ratio<i128> {
        let mut m = u128::MAX;
        for c in cells {
            m &= self.masks[c.cluster * self.periods + c.period - 1][usize::from(c.arm.is_treated())];
        }
        Ratio::new(i128::from(m.count_ones()), i128::from(self.total))
    }
}

/// Restricted growth strings: cluster labels in order of first appearance.
fn label_patterns(len: usize, max_labels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0]];
    for _ in 1..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                let next = p.iter().max().unwrap() + 1;
                (0..=next.min(max_labels - 1)).map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct JointCheck {
    pub designs: usize,
    pub compared: usize,
    pub enumerated_only: usize,
    pub mismatches: usize,
}

/// Compares every closed-form joint probability of order 2 to 4 with enumeration
/// frequencies, for all designs with `I ≤ max_clusters` and `J ≤ max_periods`.
pub fn check_joint_probabilities(max_clusters: usize, max_periods: usize) -> JointCheck {
    let mut out = JointCheck::default();
    for design in small_designs(max_clusters, max_periods) {
        out.designs += 1;
        let masks = CellMasks::new(&design);
        let periods = design.num_rollout_periods();
        for order in 2..=4 {
            for labels in label_patterns(order, design.num_clusters()) {
                for code in 0..(periods.pow(order as u32) << order) {
                    let mut rest = code;
                    let cells: Vec<CellQuery> = labels
                        .iter()
                        .map(|&cluster| {
                            let arm = if rest & 1 == 1 { Arm::Treated } else { Arm::Control };
                            rest >>= 1;
                            let period = rest % periods + 1;
                            rest /= periods;
                            CellQuery::new(cluster, period, arm)
                        })
                        .collect();
                    let spec = JointProbabilitySpec::new(cells.clone()).unwrap();
                    match design.closed_form_probability(&spec).unwrap() {
                        Some(p) => {
                            out.compared += 1;
                            if p.exact() != masks.frequency(&cells) {
                                out.mismatches += 1;
                            }
                        }
                        None => out.enumerated_only += 1,
                    }
                }
            }
        }
    }
    out
}

/// A potential-outcome table with 1 to 3 individuals per cell and arbitrary outcomes.
pub fn random_table(design: &StepWedgeDesign, rng: &mut TestRng) -> PotentialOutcomeTable {
    let (mut cluster, mut period, mut y0, mut y1, mut class, mut x) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    for i in 0..design.num_clusters() {
        for j in 0..design.num_rollout_periods() + 2 {
            for _ in 0..1 + rng.below(3) {
                cluster.push(i);
                period.push(j);
                let base = rng.normal() + i as f64 * 0.3;
                y0.push(base);
                y1.push(base + 1.0 + rng.normal());
                class.push(match rng.below(3) {
                    0 => ComplianceClass::Complier,
                    1 => ComplianceClass::AlwaysTaker,
                    _ => ComplianceClass::NeverTaker,
                });
                x.push(rng.normal());
            }
        }
    }
    PotentialOutcomeTable::new(design.clone(), vec!["x".into()], cluster, period, y0, y1, class, x, false).unwrap()
}

/// Randomization moments of the plain HT estimator computed by enumeration.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnumeratedMoments {
    pub mean: f64,
    pub variance: f64,
    pub var_treated: f64,
    pub var_control: f64,
    pub covariance: f64,
    /// Enumeration mean of the conservative variance estimator.
    pub mean_conservative: f64,
    /// Largest gap between the library estimate and a direct recomputation.
    pub estimate_gap: f64,
}

pub fn enumerate_moments(table: &PotentialOutcomeTable, lambda0: f64) -> EnumeratedMoments {
    let design = table.design();
    let tables = PairTables::new(design);
    let adoptions = brute_force_adoptions(design);
    let width = design.num_rollout_periods() + 2;
    let (t1, t0) = table.residual_cell_totals(lambda0);
    let n = table.rollout_size() as f64;
    let spec = HtSpec { adjustment: None, variance: HtVariance::Conservative };
    let mut parts = Vec::with_capacity(adoptions.len());
    let mut cons = 0.0;
    let mut gap: f64 = 0.0;
    for a in &adoptions {
        let assignment = AssignmentRealization::new(design, a.clone()).unwrap();
        let (mut treated, mut control) = (0.0, 0.0);
        for i in 0..design.num_clusters() {
            for j in 1..=design.num_rollout_periods() {
                let e = design.treated_by(j) as f64 / design.num_clusters() as f64;
                if a[i] <= j {
                    treated += t1[i * width + j] / e;
                } else {
                    control += t0[i * width + j] / (1.0 - e);
                }
            }
        }
        let (treated, control) = (treated / n, control / n);
        let fit = HtFit::fit(&table.materialize(&assignment), &tables, &spec).unwrap();
        gap = gap.max((fit.estimate(lambda0) - (treated - control)).abs());
        cons += fit.variance(lambda0, HtVariance::Conservative);
        parts.push((treated, control));
    }
    let m = parts.len() as f64;
    let mt = parts.iter().map(|p| p.0).sum::<f64>() / m;
    let mc = parts.iter().map(|p| p.1).sum::<f64>() / m;
    let cov = |f: &dyn Fn(&(f64, f64)) -> f64, g: &dyn Fn(&(f64, f64)) -> f64, mf: f64, mg: f64| {
        parts.iter().map(|p| (f(p) - mf) * (g(p) - mg)).sum::<f64>() / m
    };
    let v1 = cov(&|p| p.0, &|p| p.0, mt, mt);
    let v0 = cov(&|p| p.1, &|p| p.1, mc, mc);
    let c = cov(&|p| p.0, &|p| p.1, mt, mc);
    EnumeratedMoments {
        mean: mt - mc,
        variance: v1 + v0 - 2.0 * c,
        var_treated: v1,
        var_control: v0,
        covariance: c,
        mean_conservative: cons / m,
        estimate_gap: gap,
    }
}

/// The two designs used by the enumeration checks.
pub fn enumeration_designs() -> Vec<StepWedgeDesign> {
    vec![StepWedgeDesign::new(4, vec![1, 3]).unwrap(), StepWedgeDesign::one_at_a_time(4).unwrap()]
}

/// `τ_{λ₀}` from the table directly.
pub fn true_tau(table: &PotentialOutcomeTable, lambda0: f64) -> f64 {
    let (t1, t0) = table.residual_cell_totals(lambda0);
    let width = table.design().num_rollout_periods() + 2;
    let mut s = 0.0;
    for i in 0..table.design().num_clusters() {
        for j in 1..=table.design().num_rollout_periods() {
            s += t1[i * width + j] - t0[i * width + j];
        }
    }
    s / table.rollout_size() as f64
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CltCheck {
    pub mean_gap: f64,
    pub realization_gap: f64,
}

/// Grid mean against `τ_{λ₀}` and `Σ_i c(i, V_i)` against the estimator on `draws` assignments.
pub fn check_clt_grid(table: &PotentialOutcomeTable, lambda0: f64, draws: u64) -> CltCheck {
    let grid = CltGrid::build(table, lambda0);
    let tables = PairTables::new(table.design());
    let spec = HtSpec { adjustment: None, variance: HtVariance::Conservative };
    let mut realization_gap: f64 = 0.0;
    for seed in 0..draws {
        let a = table.design().sample_assignment(seed);
        let fit = HtFit::fit(&table.materialize(&a), &tables, &spec).unwrap();
        realization_gap = realization_gap.max((grid.realization(&a) - fit.estimate(lambda0)).abs());
    }
    CltCheck { mean_gap: (grid.overall_mean() - true_tau(table, lambda0)).abs(), realization_gap }
}

/// The outcome replaced by `Y − λD`.
pub fn residualized(data: &TrialDataset, lambda: f64) -> TrialDataset {
    data.with_outcome((0..data.len()).map(|k| data.y(k) - lambda * data.d(k)).collect()).unwrap()
}

/// `τ̂(λ)` and its sandwich variance from a fresh fit of `Y − λD`.
pub fn refit(data: &TrialDataset, spec: &AncovaSpec, lambda: f64, kind: SandwichKind) -> (f64, f64) {
    let f = fit_ancova(&residualized(data, lambda), spec).unwrap();
    (f.tau_y(), f.sandwich_variance(0.0, kind).unwrap())
}

pub fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest gap between the unadjusted period effects and raw per-period differences in means.
pub fn theta_gap(data: &TrialDataset) -> f64 {
    let fit = fit_ancova(data, &AncovaSpec::new(AncovaFlavor::Unadjusted)).unwrap();
    let mut gap: f64 = 0.0;
    for (j, theta) in fit.theta_y().iter().enumerate() {
        let period = j + 1;
        let mean = |z: bool| {
            let v: Vec<f64> = (0..data.len()).filter(|&k| data.period(k) == period && data.z(k) == z).map(|k| data.y(k)).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        gap = gap.max((theta - (mean(true) - mean(false))).abs());
    }
    gap
}

/// Gap between the closed-form `λ̂` and a bisection root of refitted `τ̂(λ)`.
pub fn lambda_root_gap(data: &TrialDataset, flavor: AncovaFlavor) -> f64 {
    let spec = AncovaSpec::new(flavor);
    let stat = fit_ancova(data, &spec).unwrap().statistic(SandwichKind::Cr0, Reference::T).unwrap();
    let root = bisect(-20.0, 20.0, |l| refit(data, &spec, l, SandwichKind::Cr0).0);
    (stat.lambda_hat().unwrap() - root).abs()
}

/// Largest endpoint gap between the inverted interval and a grid scan plus bisection of
/// refitted tests over `[-20, 20]`. `None` when the two disagree on the interval's shape.
pub fn interval_gap(data: &TrialDataset, flavor: AncovaFlavor, kind: SandwichKind, alpha: f64) -> Option<f64> {
    let spec = AncovaSpec::new(flavor);
    let stat = fit_ancova(data, &spec).unwrap().statistic(kind, Reference::T).unwrap();
    let crit = dist::t_quantile(1.0 - alpha / 2.0, data.design().num_clusters() as f64 - 2.0);
    let excess = |l: f64| {
        let (tau, var) = refit(data, &spec, l, kind);
        tau * tau - crit * crit * var
    };
    let grid: Vec<f64> = (0..=4000).map(|k| -20.0 + k as f64 * 0.01).collect();
    let roots: Vec<f64> = grid
        .windows(2)
        .filter(|w| excess(w[0]).signum() != excess(w[1]).signum())
        .map(|w| bisect(w[0], w[1], excess))
        .collect();
    match stat.interval(alpha).unwrap() {
        IntervalSet::Bounded { lo, hi } if roots.len() == 2 => Some((lo - roots[0]).abs().max((hi - roots[1]).abs())),
        _ => None,
    }
}
