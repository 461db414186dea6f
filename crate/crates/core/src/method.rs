//! A single name for every (estimator, variance, reference) combination, so front ends
//! and the simulator can dispatch without knowing which engine is underneath.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ancova::{self, AncovaFlavor, AncovaSpec};
use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::ht::{AdjustmentMode, HtFit, HtSpec, HtVariance, PairTables};
use crate::inference::{AffineStatistic, InferenceResult, Reference, TestOutcome};
use crate::stats::linalg::SandwichKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Unadjusted,
    Ancova1,
    Ancova3,
    Ht,
    HtAdjPrepost,
    HtAdjFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceKind {
    Cr0,
    Cr3,
    Cr3Ginv,
    HtConservative,
    HtSimplified,
}

impl Estimator {
    pub const ALL: [Estimator; 6] =
        [Estimator::Unadjusted, Estimator::Ancova1, Estimator::Ancova3, Estimator::Ht, Estimator::HtAdjPrepost, Estimator::HtAdjFull];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Unadjusted => "unadjusted",
            Estimator::Ancova1 => "ancova1",
            Estimator::Ancova3 => "ancova3",
            Estimator::Ht => "ht",
            Estimator::HtAdjPrepost => "ht-adj-prepost",
            Estimator::HtAdjFull => "ht-adj-full",
        }
    }

    pub fn is_ht(self) -> bool {
        matches!(self, Estimator::Ht | Estimator::HtAdjPrepost | Estimator::HtAdjFull)
    }

    /// The variance used when none is requested.
    pub fn default_variance(self) -> VarianceKind {
        if self.is_ht() {
            VarianceKind::HtConservative
        } else {
            VarianceKind::Cr3
        }
    }

    /// The reference used when none is requested.
    pub fn default_reference(self) -> Reference {
        if self.is_ht() {
            Reference::Gaussian
        } else {
            Reference::T
        }
    }

    fn ancova_spec(self) -> Option<AncovaSpec> {
        let flavor = match self {
            Estimator::Unadjusted => AncovaFlavor::Unadjusted,
            Estimator::Ancova1 => AncovaFlavor::AncovaI,
            Estimator::Ancova3 => AncovaFlavor::AncovaIII,
            _ => return None,
        };
        Some(AncovaSpec::new(flavor))
    }

    fn adjustment(self) -> Option<AdjustmentMode> {
        match self {
            Estimator::HtAdjPrepost => Some(AdjustmentMode::PrePostRollout),
            Estimator::HtAdjFull => Some(AdjustmentMode::FullData),
            _ => None,
        }
    }
}

impl VarianceKind {
    pub const ALL: [VarianceKind; 5] =
        [VarianceKind::Cr0, VarianceKind::Cr3, VarianceKind::Cr3Ginv, VarianceKind::HtConservative, VarianceKind::HtSimplified];

    pub fn label(self) -> &'static str {
        match self {
            VarianceKind::Cr0 => "cr0",
            VarianceKind::Cr3 => "cr3",
            VarianceKind::Cr3Ginv => "cr3-ginv",
            VarianceKind::HtConservative => "ht-conservative",
            VarianceKind::HtSimplified => "ht-simplified",
        }
    }

    pub fn is_ht(self) -> bool {
        matches!(self, VarianceKind::HtConservative | VarianceKind::HtSimplified)
    }

    fn sandwich(self) -> Option<SandwichKind> {
        match self {
            VarianceKind::Cr0 => Some(SandwichKind::Cr0),
            VarianceKind::Cr3 => Some(SandwichKind::Cr3),
            VarianceKind::Cr3Ginv => Some(SandwichKind::Cr3Ginv),
            _ => None,
        }
    }

    fn ht(self) -> Option<HtVariance> {
        match self {
            VarianceKind::HtConservative => Some(HtVariance::Conservative),
            VarianceKind::HtSimplified => Some(HtVariance::Simplified),
            _ => None,
        }
    }
}

fn parse_label<T: Copy>(s: &str, all: &[T], label: impl Fn(T) -> &'static str, what: &str) -> Result<T> {
    all.iter().copied().find(|&v| label(v) == s).ok_or_else(|| {
        let names: Vec<_> = all.iter().map(|&v| label(v)).collect();
        Error::Config(format!("unknown {what} `{s}` (expected one of {})", names.join(", ")))
    })
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_label(s, &Estimator::ALL, Estimator::label, "estimator")
    }
}

impl FromStr for VarianceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_label(s, &VarianceKind::ALL, VarianceKind::label, "variance")
    }
}

impl FromStr for Reference {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_label(s, &[Reference::T, Reference::Gaussian], Reference::label, "reference")
    }
}

/// A validated estimator/variance/reference triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MethodFields", into = "MethodFields")]
pub struct Method {
    estimator: Estimator,
    variance: VarianceKind,
    reference: Reference,
}

#[derive(Serialize, Deserialize)]
struct MethodFields {
    estimator: Estimator,
    #[serde(default)]
    variance: Option<VarianceKind>,
    #[serde(default)]
    reference: Option<Reference>,
}

impl TryFrom<MethodFields> for Method {
    type Error = Error;
    fn try_from(f: MethodFields) -> Result<Self> {
        Method::new(
            f.estimator,
            f.variance.unwrap_or_else(|| f.estimator.default_variance()),
            f.reference.unwrap_or_else(|| f.estimator.default_reference()),
        )
    }
}

impl From<Method> for MethodFields {
    fn from(m: Method) -> Self {
        MethodFields { estimator: m.estimator, variance: Some(m.variance), reference: Some(m.reference) }
    }
}

impl Method {
    /// Regression estimators take sandwich variances, HT estimators take HT variances.
    pub fn new(estimator: Estimator, variance: VarianceKind, reference: Reference) -> Result<Self> {
        if estimator.is_ht() != variance.is_ht() {
            return Err(Error::Config(format!(
                "variance `{}` does not apply to estimator `{}`",
                variance.label(),
                estimator.label()
            )));
        }
        Ok(Method { estimator, variance, reference })
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn variance(&self) -> VarianceKind {
        self.variance
    }

    pub fn reference(&self) -> Reference {
        self.reference
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.estimator.label(), self.variance.label(), self.reference.label())
    }

    /// The affine statistic `τ̂(λ)` with its variance surface. `tables` is only read by
    /// HT estimators and can be shared across datasets with the same design.
    pub fn statistic(&self, data: &TrialDataset, tables: &PairTables) -> Result<AffineStatistic> {
        match (self.estimator.ancova_spec(), self.variance.sandwich(), self.variance.ht()) {
            (Some(spec), Some(kind), _) => ancova::fit_ancova(data, &spec)?.statistic(kind, self.reference),
            (None, _, Some(kind)) => Ok(self.ht_fit(data, tables, kind)?.statistic(kind, self.reference)),
            _ => unreachable!("validated in Method::new"),
        }
    }

    fn ht_fit(&self, data: &TrialDataset, tables: &PairTables, kind: HtVariance) -> Result<HtFit> {
        HtFit::fit(data, tables, &HtSpec { adjustment: self.estimator.adjustment(), variance: kind })
    }

    /// Test of `H₀: τ = 0` computed from `Y` alone.
    pub fn itt_test(&self, data: &TrialDataset, tables: &PairTables) -> Result<TestOutcome> {
        match (self.estimator.ancova_spec(), self.variance.sandwich(), self.variance.ht()) {
            (Some(spec), Some(kind), _) => ancova::test_itt(data, &spec, kind, self.reference),
            (None, _, Some(kind)) => self.ht_fit(data, tables, kind)?.itt_statistic(kind, self.reference).test(0.0),
            _ => unreachable!("validated in Method::new"),
        }
    }

    pub fn analyze(&self, data: &TrialDataset, tables: &PairTables, alpha: f64) -> Result<InferenceResult> {
        let stat = self.statistic(data, tables)?;
        InferenceResult::from_statistic(&stat, self.estimator.label(), self.variance.label(), alpha)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.label().parse::<Estimator>().unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{}\"", e.label()));
        }
        for v in VarianceKind::ALL {
            assert_eq!(v.label().parse::<VarianceKind>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.label()));
        }
        assert!(matches!("ancova2".parse::<Estimator>(), Err(Error::Config(_))));
    }

    #[test]
    fn mismatched_variance_is_rejected() {
        assert!(Method::new(Estimator::Ht, VarianceKind::Cr0, Reference::T).is_err());
        assert!(Method::new(Estimator::Ancova1, VarianceKind::HtSimplified, Reference::T).is_err());
        let m: Method = serde_json::from_str(r#"{"estimator":"ht-adj-prepost"}"#).unwrap();
        assert_eq!(m.label(), "ht-adj-prepost/ht-conservative/gaussian");
        assert!(serde_json::from_str::<Method>(r#"{"estimator":"ht","variance":"cr3"}"#).is_err());
    }
}
