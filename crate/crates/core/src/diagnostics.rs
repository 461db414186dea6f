//! Heuristic checks: whether time spent on an arm predicts outcomes within that arm,
//! and covariate balance between arms in the rollout periods.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::stats::dist;
use crate::stats::linalg::{self, ClusterSandwich, SandwichKind};

const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITER: usize = 100;
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    D,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmLabel {
    Intervention,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationTestResult {
    pub response: Response,
    pub arm: ArmLabel,
    /// Coefficient on periods spent in the arm.
    pub coefficient: f64,
    pub se: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    pub n_rows: usize,
    pub n_clusters: usize,
}

/// Logistic regression by iteratively reweighted least squares.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta: DVector<f64>,
    pub fitted: Vec<f64>,
    pub iterations: usize,
    pub deviance_trace: Vec<f64>,
}

fn deviance(y: &DVector<f64>, mu: &[f64]) -> f64 {
    -2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| if y == 1.0 { m.ln() } else { (1.0 - m).ln() })
        .sum::<f64>()
}

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

pub fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String], arm: &str) -> Result<LogisticFit> {
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Separation { arm: arm.into() });
    }
    linalg::factor(&linalg::gram(x, None), names)?;
    let n = y.len();
    let mut beta = DVector::<f64>::zeros(x.ncols());
    let mut mu = vec![0.5; n];
    let mut trace = vec![deviance(y, &mu)];
    for it in 1..=IRLS_MAX_ITER {
        let eta = x * &beta;
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let work = DVector::from_fn(n, |r, _| eta[r] + (y[r] - mu[r]) / w[r]);
        let bread = linalg::gram(x, Some(&w));
        let chol = linalg::factor(&bread, names)?;
        let xwz = x.tr_mul(&DVector::from_fn(n, |r, _| w[r] * work[r]));
        beta = chol.solve(&xwz);
        let eta = x * &beta;
        if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
            return Err(Error::Separation { arm: arm.into() });
        }
        mu = eta.iter().map(|&e| sigmoid(e)).collect();
        let dev = deviance(y, &mu);
        let prev = *trace.last().unwrap();
        trace.push(dev);
        if (dev - prev).abs() / (dev.abs() + 0.1) < IRLS_TOL {
            return Ok(LogisticFit { beta, fitted: mu, iterations: it, deviance_trace: trace });
        }
    }
    Err(Error::NonConvergence { iterations: IRLS_MAX_ITER, trace })
}

/// Periods on the current arm: `j − A_i + 1` on intervention, `j` on control.
fn time_on_arm(data: &TrialDataset, row: usize) -> f64 {
    let j = data.period(row) as f64;
    if data.z(row) {
        j - data.assignment().adoption_time(data.cluster(row)) as f64 + 1.0
    } else {
        j
    }
}

fn duration_test(data: &TrialDataset, response: Response, arm: ArmLabel) -> Result<DurationTestResult> {
    let treated = arm == ArmLabel::Intervention;
    let arm_name = match arm {
        ArmLabel::Intervention => "intervention",
        ArmLabel::Control => "control",
    };
    let rows: Vec<usize> = data.rollout_rows().into_iter().filter(|&k| data.z(k) == treated).collect();
    let p = data.num_covariates();
    let mut names = vec!["intercept".to_string(), "time_on_arm".to_string()];
    names.extend(data.covariate_names().iter().cloned());
    if rows.len() < names.len() + 1 {
        return Err(Error::InsufficientRows { what: format!("{arm_name} duration regression"), need: names.len() + 1, found: rows.len() });
    }
    let x = DMatrix::from_fn(rows.len(), p + 2, |r, c| match c {
        0 => 1.0,
        1 => time_on_arm(data, rows[r]),
        _ => data.x(rows[r])[c - 2],
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&k| match response {
        Response::D => data.d(k),
        Response::Y => data.y(k),
    }));

    // Re-index the arm's clusters densely.
    let mut ids: Vec<usize> = rows.iter().map(|&k| data.cluster(k)).collect();
    let mut distinct = ids.clone();
    distinct.sort_unstable();
    distinct.dedup();
    ids.iter_mut().for_each(|c| *c = distinct.binary_search(c).unwrap());
    let n_clusters = distinct.len();
    if n_clusters < 3 {
        return Err(Error::InsufficientRows { what: format!("{arm_name} arm clusters"), need: 3, found: n_clusters });
    }

    let (beta, bread, resid) = match response {
        Response::D => {
            let fit = fit_logistic(&x, &y, &names, arm_name)?;
            let w: Vec<f64> = fit.fitted.iter().map(|m| m * (1.0 - m)).collect();
            let resid: Vec<f64> = y.iter().zip(&fit.fitted).map(|(y, m)| y - m).collect();
            (fit.beta, linalg::gram(&x, Some(&w)), resid)
        }
        Response::Y => {
            let gram = linalg::gram(&x, None);
            let chol = linalg::factor(&gram, &names)?;
            let beta = chol.solve(&x.tr_mul(&y));
            let resid: Vec<f64> = (&y - &x * &beta).iter().copied().collect();
            (beta, gram, resid)
        }
    };
    let chol = linalg::factor(&bread, &names)?;
    let sandwich = ClusterSandwich { x: &x, row_weights: None, bread: &bread, bread_chol: &chol, clusters: &ids, num_clusters: n_clusters };
    let mut unit = DVector::<f64>::zeros(p + 2);
    unit[1] = 1.0;
    let scores = sandwich.contrast_scores(&unit, &[&resid], SandwichKind::Cr0)?;
    let se = scores[0].iter().map(|s| s * s).sum::<f64>().sqrt();
    let df = n_clusters as f64 - 2.0;
    let t_stat = beta[1] / se;
    Ok(DurationTestResult {
        response,
        arm,
        coefficient: beta[1],
        se,
        t_stat,
        df,
        p_value: (2.0 * dist::t_sf(t_stat.abs(), df)).min(1.0),
        n_rows: rows.len(),
        n_clusters,
    })
}

/// The four arm-by-response regressions: D (logistic) and Y (linear), each within the
/// intervention and control rollout records, on intercept, time on arm and covariates.
pub fn duration_tests(data: &TrialDataset) -> Result<Vec<DurationTestResult>> {
    let mut out = Vec::with_capacity(4);
    for response in [Response::D, Response::Y] {
        for arm in [ArmLabel::Intervention, ArmLabel::Control] {
            out.push(duration_test(data, response, arm)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_treated: f64,
    pub sd_treated: f64,
    pub mean_control: f64,
    pub sd_control: f64,
    /// `|m₁ − m₀| / sqrt((s₁² + s₀²)/2)`; infinite when the pooled SD is zero but means differ.
    pub smd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    (m, if v.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 })
}

/// Arm means, SDs and standardized mean differences over rollout records.
/// `covariates` selects columns by name; empty means all.
pub fn balance_table(data: &TrialDataset, covariates: &[String]) -> Result<Vec<BalanceRow>> {
    let idx: Vec<usize> = if covariates.is_empty() {
        (0..data.num_covariates()).collect()
    } else {
        covariates
            .iter()
            .map(|n| {
                data.covariate_names().iter().position(|c| c == n).ok_or_else(|| Error::Config(format!("unknown covariate `{n}`")))
            })
            .collect::<Result<_>>()?
    };
    let rows = data.rollout_rows();
    let (t_rows, c_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&k| data.z(k));
    if t_rows.is_empty() || c_rows.is_empty() {
        return Err(Error::InsufficientRows { what: "balance table arm".into(), need: 1, found: 0 });
    }
    Ok(idx
        .into_iter()
        .map(|c| {
            let (m1, s1) = mean_sd(&t_rows.iter().map(|&k| data.x(k)[c]).collect::<Vec<_>>());
            let (m0, s0) = mean_sd(&c_rows.iter().map(|&k| data.x(k)[c]).collect::<Vec<_>>());
            let pooled = ((s1 * s1 + s0 * s0) / 2.0).sqrt();
            let diff = (m1 - m0).abs();
            let smd = if pooled > 0.0 {
                diff / pooled
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            BalanceRow { covariate: data.covariate_names()[c].clone(), mean_treated: m1, sd_treated: s1, mean_control: m0, sd_control: s0, smd }
        })
        .collect())
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text rendering of a balance table.
pub fn render_balance(rows: &[BalanceRow]) -> String {
    let width = rows.iter().map(|r| r.covariate.len()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<width$}  {:>18}  {:>18}  {:>7}\n",
        "covariate", "intervention", "control", "SMD"
    );
    for r in rows {
        let smd = if r.smd.is_finite() { format!("{:.3}", r.smd) } else { "inf".into() };
        out.push_str(&format!(
            "{:<width$}  {:>18}  {:>18}  {:>7}\n",
            r.covariate,
            format!("{:.3} ({:.3})", r.mean_treated, r.sd_treated),
            format!("{:.3} ({:.3})", r.mean_control, r.sd_control),
            smd
        ));
    }
    out
}

/// Aligned plain-text rendering of the duration tests.
pub fn render_duration(rows: &[DurationTestResult]) -> String {
    let mut out = format!("{:<8} {:<12} {:>10} {:>10} {:>8} {:>6} {:>8}\n", "response", "arm", "beta", "se", "t", "df", "p");
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:<12} {:>10.4} {:>10.4} {:>8.3} {:>6.1} {:>8.4}\n",
            format!("{:?}", r.response),
            format!("{:?}", r.arm).to_lowercase(),
            r.coefficient,
            r.se,
            r.t_stat,
            r.df,
            r.p_value
        ));
    }
    out
}
