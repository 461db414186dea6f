//! Tests and confidence sets for the effect ratio built on an estimator that is affine in
//! `λ` with a variance quadratic in `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::dist;

/// Reference distribution for the standardized deviate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    T,
    Gaussian,
}

impl Reference {
    pub fn label(self) -> &'static str {
        match self {
            Reference::T => "t",
            Reference::Gaussian => "gaussian",
        }
    }
}

/// The set `{λ : τ̂(λ)² ≤ c²·S(λ)²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum IntervalSet {
    Bounded { lo: f64, hi: f64 },
    /// `(−∞, hi] ∪ [lo, ∞)` with `hi < lo`.
    TwoRays { hi: f64, lo: f64 },
    /// `(−∞, hi]`; arises when the quadratic's leading coefficient is exactly zero.
    LeftRay { hi: f64 },
    /// `[lo, ∞)`.
    RightRay { lo: f64 },
    WholeLine,
    Empty,
    Point { x: f64 },
}

impl IntervalSet {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            IntervalSet::Bounded { lo, hi } => lo <= v && v <= hi,
            IntervalSet::TwoRays { hi, lo } => v <= hi || v >= lo,
            IntervalSet::LeftRay { hi } => v <= hi,
            IntervalSet::RightRay { lo } => v >= lo,
            IntervalSet::WholeLine => true,
            IntervalSet::Empty => false,
            IntervalSet::Point { x } => v == x,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            IntervalSet::Bounded { .. } => "bounded",
            IntervalSet::TwoRays { .. } => "two_rays",
            IntervalSet::LeftRay { .. } => "left_ray",
            IntervalSet::RightRay { .. } => "right_ray",
            IntervalSet::WholeLine => "whole_line",
            IntervalSet::Empty => "empty",
            IntervalSet::Point { .. } => "point",
        }
    }

    /// Compact human form, e.g. `[-0.31, 0.05]`.
    pub fn render(&self, digits: usize) -> String {
        let f = |v: f64| format!("{v:.digits$}");
        match *self {
            IntervalSet::Bounded { lo, hi } => format!("[{}, {}]", f(lo), f(hi)),
            IntervalSet::TwoRays { hi, lo } => format!("(-inf, {}] u [{}, inf)", f(hi), f(lo)),
            IntervalSet::LeftRay { hi } => format!("(-inf, {}]", f(hi)),
            IntervalSet::RightRay { lo } => format!("[{}, inf)", f(lo)),
            IntervalSet::WholeLine => "(-inf, inf)".into(),
            IntervalSet::Empty => "empty".into(),
            IntervalSet::Point { x } => format!("{{{}}}", f(x)),
        }
    }
}

/// Solves `a2 λ² + a1 λ + a0 ≤ 0`.
pub fn quadratic_sublevel_set(a2: f64, a1: f64, a0: f64) -> IntervalSet {
    if a2 == 0.0 {
        return match a1.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => IntervalSet::LeftRay { hi: -a0 / a1 },
            Some(std::cmp::Ordering::Less) => IntervalSet::RightRay { lo: -a0 / a1 },
            _ if a0 <= 0.0 => IntervalSet::WholeLine,
            _ => IntervalSet::Empty,
        };
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    let scale = a1 * a1 + (4.0 * a2 * a0).abs();
    let degenerate = disc.abs() <= 1e-12 * scale;
    if a2 > 0.0 {
        if degenerate {
            return IntervalSet::Point { x: -a1 / (2.0 * a2) };
        }
        if disc < 0.0 {
            return IntervalSet::Empty;
        }
        let (r1, r2) = roots(a2, a1, a0, disc);
        IntervalSet::Bounded { lo: r1, hi: r2 }
    } else {
        if degenerate || disc < 0.0 {
            return IntervalSet::WholeLine;
        }
        let (r1, r2) = roots(a2, a1, a0, disc);
        IntervalSet::TwoRays { hi: r1, lo: r2 }
    }
}

/// Both real roots, ascending, via the cancellation-free form.
fn roots(a2: f64, a1: f64, a0: f64, disc: f64) -> (f64, f64) {
    let q = -0.5 * (a1 + a1.signum() * disc.sqrt());
    let (x1, x2) = if q == 0.0 { (0.0, 0.0) } else { (q / a2, a0 / q) };
    if x1 <= x2 {
        (x1, x2)
    } else {
        (x2, x1)
    }
}

/// How the variance of `τ̂(λ)` is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceSurface {
    /// `Σ_c (a_c − λ b_c)²` from per-cluster scores.
    ClusterScores { a: Vec<f64>, b: Vec<f64> },
    /// `q0 + q1 λ + q2 λ²`.
    Quadratic { q0: f64, q1: f64, q2: f64 },
}

impl VarianceSurface {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            VarianceSurface::ClusterScores { a, b } => a.iter().zip(b).map(|(a, b)| (a - lambda * b).powi(2)).sum(),
            VarianceSurface::Quadratic { q0, q1, q2 } => q0 + lambda * q1 + lambda * lambda * q2,
        }
    }

    /// `(q0, q1, q2)`.
    pub fn coefficients(&self) -> (f64, f64, f64) {
        match self {
            VarianceSurface::ClusterScores { a, b } => (
                a.iter().map(|a| a * a).sum(),
                -2.0 * a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>(),
                b.iter().map(|b| b * b).sum(),
            ),
            VarianceSurface::Quadratic { q0, q1, q2 } => (*q0, *q1, *q2),
        }
    }
}

/// `τ̂(λ) = a − λ b` together with its variance surface and reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStatistic {
    pub intercept: f64,
    pub slope: f64,
    pub variance: VarianceSurface,
    pub reference: Reference,
    /// Degrees of freedom for the `t` reference; ignored for the Gaussian one.
    pub df: f64,
}

/// Outcome of a single test at `λ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub lambda0: f64,
    pub tau_hat: f64,
    pub se: f64,
    /// `None` when the standard error is zero.
    pub deviate: Option<f64>,
    pub p_value: f64,
    pub flags: Vec<String>,
}

impl AffineStatistic {
    pub fn tau(&self, lambda: f64) -> f64 {
        self.intercept - lambda * self.slope
    }

    pub fn variance_at(&self, lambda: f64) -> f64 {
        self.variance.eval(lambda)
    }

    /// Root of `τ̂(λ) = 0`.
    pub fn lambda_hat(&self) -> Result<f64> {
        if self.slope == 0.0 {
            return Err(Error::WeakFirstStage);
        }
        Ok(self.intercept / self.slope)
    }

    pub fn df(&self) -> Option<f64> {
        match self.reference {
            Reference::T => Some(self.df),
            Reference::Gaussian => None,
        }
    }

    /// Two-sided `1 − α/2` critical value.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(match self.reference {
            Reference::T => dist::t_quantile(1.0 - alpha / 2.0, self.df),
            Reference::Gaussian => dist::normal_quantile(1.0 - alpha / 2.0),
        })
    }

    fn two_sided_p(&self, deviate: f64) -> f64 {
        let tail = match self.reference {
            Reference::T => dist::t_sf(deviate.abs(), self.df),
            Reference::Gaussian => dist::normal_sf(deviate.abs()),
        };
        (2.0 * tail).min(1.0)
    }

    pub fn test(&self, lambda0: f64) -> Result<TestOutcome> {
        if !lambda0.is_finite() {
            return Err(Error::Domain(format!("λ₀ must be finite, got {lambda0}")));
        }
        let tau_hat = self.tau(lambda0);
        let variance = self.variance_at(lambda0);
        if variance < 0.0 {
            return Err(Error::NegativeVariance { value: variance });
        }
        let se = variance.sqrt();
        if se == 0.0 {
            let (p_value, flag) = if tau_hat == 0.0 { (1.0, "zero-variance-zero-estimate") } else { (0.0, "zero-variance") };
            return Ok(TestOutcome { lambda0, tau_hat, se, deviate: None, p_value, flags: vec![flag.into()] });
        }
        let deviate = tau_hat / se;
        Ok(TestOutcome { lambda0, tau_hat, se, deviate: Some(deviate), p_value: self.two_sided_p(deviate), flags: vec![] })
    }

    /// Rejection at level `α` by comparing `|deviate|` with the critical value.
    pub fn rejects(&self, lambda0: f64, alpha: f64) -> Result<bool> {
        let crit = self.critical_value(alpha)?;
        let t = self.test(lambda0)?;
        Ok(match t.deviate {
            Some(d) => d.abs() >= crit,
            None => t.tau_hat != 0.0,
        })
    }

    /// Test inversion: `{λ : (a − λb)² ≤ c²(q0 + q1λ + q2λ²)}`.
    pub fn interval(&self, alpha: f64) -> Result<IntervalSet> {
        let c2 = self.critical_value(alpha)?.powi(2);
        let (q0, q1, q2) = self.variance.coefficients();
        let (a, b) = (self.intercept, self.slope);
        Ok(quadratic_sublevel_set(b * b - c2 * q2, -2.0 * a * b - c2 * q1, a * a - c2 * q0))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// One estimator/variance combination summarized for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub estimator: String,
    pub variance: String,
    pub reference: Reference,
    pub lambda_hat: Option<f64>,
    pub tau_at_0: f64,
    pub se_at_lambda_hat: Option<f64>,
    pub df: Option<f64>,
    pub alpha: f64,
    pub interval: IntervalSet,
    pub p_value_at_0: f64,
    pub deviate_at_0: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl InferenceResult {
    pub fn from_statistic(stat: &AffineStatistic, estimator: &str, variance: &str, alpha: f64) -> Result<Self> {
        let at_zero = stat.test(0.0)?;
        let lambda_hat = stat.lambda_hat().ok();
        let mut flags = at_zero.flags.clone();
        if lambda_hat.is_none() {
            flags.push("weak-first-stage".into());
        }
        let se_at_lambda_hat = lambda_hat.map(|l| stat.variance_at(l).max(0.0).sqrt());
        Ok(InferenceResult {
            estimator: estimator.into(),
            variance: variance.into(),
            reference: stat.reference,
            lambda_hat,
            tau_at_0: at_zero.tau_hat,
            se_at_lambda_hat,
            df: stat.df(),
            alpha,
            interval: stat.interval(alpha)?,
            p_value_at_0: at_zero.p_value,
            deviate_at_0: at_zero.deviate,
            flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_geometries() {
        // (λ-1)(λ-3) ≤ 0
        assert_eq!(quadratic_sublevel_set(1.0, -4.0, 3.0), IntervalSet::Bounded { lo: 1.0, hi: 3.0 });
        assert_eq!(quadratic_sublevel_set(1.0, 0.0, 1.0), IntervalSet::Empty);
        assert_eq!(quadratic_sublevel_set(1.0, -2.0, 1.0), IntervalSet::Point { x: 1.0 });
        assert_eq!(quadratic_sublevel_set(-1.0, 4.0, -3.0), IntervalSet::TwoRays { hi: 1.0, lo: 3.0 });
        assert_eq!(quadratic_sublevel_set(-1.0, 0.0, -1.0), IntervalSet::WholeLine);
        assert_eq!(quadratic_sublevel_set(0.0, 2.0, -4.0), IntervalSet::LeftRay { hi: 2.0 });
        assert_eq!(quadratic_sublevel_set(0.0, -2.0, 4.0), IntervalSet::RightRay { lo: 2.0 });
    }

    fn stat(a: f64, b: f64, q: (f64, f64, f64)) -> AffineStatistic {
        AffineStatistic {
            intercept: a,
            slope: b,
            variance: VarianceSurface::Quadratic { q0: q.0, q1: q.1, q2: q.2 },
            reference: Reference::T,
            df: 10.0,
        }
    }

    #[test]
    fn interval_contains_point_estimate() {
        let s = stat(0.6, 0.3, (0.01, 0.0, 0.002));
        let ci = s.interval(0.05).unwrap();
        assert!(matches!(ci, IntervalSet::Bounded { .. }));
        assert!(ci.contains(s.lambda_hat().unwrap()));
        // weak first stage
        let weak = stat(0.6, 0.001, (0.01, 0.0, 0.002));
        assert!(matches!(weak.interval(0.05).unwrap(), IntervalSet::WholeLine | IntervalSet::TwoRays { .. }));
    }

    #[test]
    fn degenerate_variance_flags() {
        let s = stat(1.0, 1.0, (0.0, 0.0, 0.0));
        let t = s.test(0.0).unwrap();
        assert_eq!((t.p_value, t.deviate), (0.0, None));
        let t = s.test(1.0).unwrap();
        assert_eq!(t.p_value, 1.0);
        let neg = stat(1.0, 1.0, (-1.0, 0.0, 0.0));
        assert!(matches!(neg.test(0.0), Err(Error::NegativeVariance { .. })));
        assert!(matches!(stat(1.0, 0.0, (1.0, 0.0, 0.0)).lambda_hat(), Err(Error::WeakFirstStage)));
    }

    #[test]
    fn interval_serializes_with_type_tag() {
        let json = serde_json::to_string(&IntervalSet::Bounded { lo: -1.0, hi: 2.0 }).unwrap();
        assert_eq!(json, r#"{"type":"bounded","lo":-1.0,"hi":2.0}"#);
        assert_eq!(serde_json::to_string(&IntervalSet::WholeLine).unwrap(), r#"{"type":"whole_line"}"#);
    }
}
