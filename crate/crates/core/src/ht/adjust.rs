use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::stats::linalg;

/// Which records train the arm-specific outcome models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjustmentMode {
    /// Control model from period 0, treated model from period `J+1`. Assignment-independent.
    PrePostRollout,
    /// Control model from period 0 plus control rollout records; treated model from
    /// period `J+1` plus treated rollout records. Depends on the realized assignment.
    FullData,
}

/// A linear predictor `(1, x) ↦ intercept + x′slope` for `Y` and one for `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub coef_y: Vec<f64>,
    pub coef_d: Vec<f64>,
}

impl ArmModel {
    fn eval(coef: &[f64], x: &[f64]) -> f64 {
        coef[0] + coef[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// `(ĝ_Y(x), ĝ_D(x))`; the residualized prediction is `ĝ_Y − λ ĝ_D`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        (Self::eval(&self.coef_y, x), Self::eval(&self.coef_d, x))
    }

    pub fn predict_at(&self, x: &[f64], lambda: f64) -> f64 {
        let (y, d) = self.predict(x);
        y - lambda * d
    }
}

/// Fitted `ĝ₀` (control) and `ĝ₁` (treated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentModel {
    pub mode: AdjustmentMode,
    pub control: ArmModel,
    pub treated: ArmModel,
}

impl AdjustmentModel {
    pub fn arm(&self, treated: bool) -> &ArmModel {
        if treated {
            &self.treated
        } else {
            &self.control
        }
    }

    /// `(ḡ_{a,Y}, ḡ_{a,D})` summed over the records of each rollout cell, indexed
    /// `[i * (J+2) + j]`, for both arms `(control, treated)`.
    pub fn cell_sums(&self, data: &TrialDataset) -> [Vec<(f64, f64)>; 2] {
        let width = data.design().num_rollout_periods() + 2;
        let cells = data.design().num_clusters() * width;
        let mut out = [vec![(0.0, 0.0); cells], vec![(0.0, 0.0); cells]];
        for k in (0..data.len()).filter(|&k| data.is_rollout(k)) {
            let c = data.cluster(k) * width + data.period(k);
            for (arm, sums) in out.iter_mut().enumerate() {
                let (y, d) = self.arm(arm == 1).predict(data.x(k));
                sums[c].0 += y;
                sums[c].1 += d;
            }
        }
        out
    }
}

fn fit_arm(data: &TrialDataset, rows: &[usize], arm: &str) -> Result<ArmModel> {
    let p = data.num_covariates();
    if rows.len() < p + 2 {
        return Err(Error::InsufficientRows { what: format!("{arm} adjustment model"), need: p + 2, found: rows.len() });
    }
    let x = DMatrix::from_fn(rows.len(), p + 1, |r, c| if c == 0 { 1.0 } else { data.x(rows[r])[c - 1] });
    let mut names = vec!["intercept".to_string()];
    names.extend(data.covariate_names().iter().cloned());
    let gram = linalg::gram(&x, None);
    let chol = linalg::factor(&gram, &names).map_err(|e| match e {
        Error::RankDeficient { columns } => {
            Error::RankDeficient { columns: columns.into_iter().map(|c| format!("{c} ({arm} adjustment model)")).collect() }
        }
        other => other,
    })?;
    let solve = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let resp = DVector::from_iterator(rows.len(), rows.iter().map(|&k| f(k)));
        chol.solve(&x.tr_mul(&resp)).iter().copied().collect()
    };
    Ok(ArmModel { coef_y: solve(&|k| data.y(k)), coef_d: solve(&|k| data.d(k)) })
}

/// Least-squares fits of `Y` and of `D` on `(1, x)` within each arm's training set.
pub fn fit_adjustment(data: &TrialDataset, mode: AdjustmentMode) -> Result<AdjustmentModel> {
    let post = data.design().num_rollout_periods() + 1;
    let (mut control, mut treated) = (Vec::new(), Vec::new());
    for k in 0..data.len() {
        let j = data.period(k);
        let use_rollout = mode == AdjustmentMode::FullData && data.is_rollout(k);
        if j == 0 || (use_rollout && !data.z(k)) {
            control.push(k);
        } else if j == post || (use_rollout && data.z(k)) {
            treated.push(k);
        }
    }
    Ok(AdjustmentModel { mode, control: fit_arm(data, &control, "control")?, treated: fit_arm(data, &treated, "treated")? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::design::StepWedgeDesign;

    fn data() -> TrialDataset {
        let design = StepWedgeDesign::new(3, vec![1, 2]).unwrap();
        let mut rows = Vec::new();
        for (i, a) in [1usize, 2, 3].into_iter().enumerate() {
            for j in 0..=3 {
                for k in 0..4 {
                    let z = j >= a;
                    let x = (i * 4 + k) as f64 + 0.5 * j as f64;
                    let d = if z && k > 0 { 1.0 } else { 0.0 };
                    let y = if z { 2.0 + 0.5 * x + d } else { 1.0 - x };
                    rows.push(Record { cluster: i as i64, period: j, z, d, y, x: vec![x] });
                }
            }
        }
        TrialDataset::new(design, vec!["x".into()], rows).unwrap()
    }

    #[test]
    fn prepost_recovers_linear_arms() {
        let m = fit_adjustment(&data(), AdjustmentMode::PrePostRollout).unwrap();
        assert!((m.control.coef_y[0] - 1.0).abs() < 1e-10 && (m.control.coef_y[1] + 1.0).abs() < 1e-10);
        let (gy, gd) = m.treated.predict(&[2.0]);
        assert!((m.treated.predict_at(&[2.0], 2.0) - (gy - 2.0 * gd)).abs() < 1e-15);
    }

    #[test]
    fn full_data_uses_more_rows_and_errors_when_thin() {
        let d = data();
        assert!(fit_adjustment(&d, AdjustmentMode::FullData).is_ok());
        let thin: Vec<usize> = vec![0, 1];
        assert!(matches!(fit_arm(&d, &thin, "control"), Err(Error::InsufficientRows { need: 3, .. })));
    }
}
