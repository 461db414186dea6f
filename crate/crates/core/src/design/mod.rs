//! Stepped-wedge designs, assignment realizations, and exact assignment probabilities.
//!
//! Periods are indexed `0..=J+1`. Period 0 is pre-rollout (everyone on control) and
//! period `J+1` is post-rollout (everyone treated); only `1..=J` carry randomness.
//! Clusters are indexed `0..I`.

mod enumerate;
mod file;
mod joint;

use num_rational::Ratio;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use enumerate::{Assignments, DEFAULT_ENUMERATION_CAP};
pub use file::DesignFile;
pub use joint::{Arm, CellQuery, JointProbabilitySpec, PairProbabilities};

pub type Rational = Ratio<i128>;

/// An exact probability with a cached float view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Probability(Rational);

impl Probability {
    pub fn new(value: Rational) -> Self {
        Probability(value)
    }

    pub fn exact(&self) -> Rational {
        self.0
    }

    pub fn value(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn complement(&self) -> Self {
        Probability(Rational::from_integer(1) - self.0)
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DesignFile", into = "DesignFile")]
pub struct StepWedgeDesign {
    num_clusters: usize,
    cumulative: Vec<usize>,
}

impl StepWedgeDesign {
    /// `cumulative[j-1]` is the number of clusters on intervention by rollout period `j`.
    pub fn new(num_clusters: usize, cumulative: Vec<usize>) -> Result<Self> {
        if cumulative.is_empty() {
            return Err(Error::InvalidDesign("at least one rollout period is required".into()));
        }
        if cumulative[0] == 0 {
            return Err(Error::InvalidDesign("I_1 must be positive".into()));
        }
        if let Some(w) = cumulative.windows(2).find(|w| w[0] > w[1]) {
            return Err(Error::InvalidDesign(format!(
                "cumulative treated counts must be non-decreasing, found {} then {}",
                w[0], w[1]
            )));
        }
        let last = *cumulative.last().unwrap();
        if last >= num_clusters {
            return Err(Error::InvalidDesign(format!(
                "I_J = {last} must be smaller than the number of clusters I = {num_clusters}"
            )));
        }
        Ok(StepWedgeDesign { num_clusters, cumulative })
    }

    /// One cluster crosses over per period: `I_j = j`, `I = J + 1`.
    pub fn one_at_a_time(rollout_periods: usize) -> Result<Self> {
        Self::new(rollout_periods + 1, (1..=rollout_periods).collect())
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_rollout_periods(&self) -> usize {
        self.cumulative.len()
    }

    pub fn cumulative_treated(&self) -> &[usize] {
        &self.cumulative
    }

    /// `I_j` for any `j` in `0..=J+1`, with `I_0 = 0` and `I_{J+1} = I`.
    pub fn treated_by(&self, period: usize) -> usize {
        let rollout = self.num_rollout_periods();
        match period {
            0 => 0,
            p if p <= rollout => self.cumulative[p - 1],
            _ => self.num_clusters,
        }
    }

    /// Number of clusters adopting at time `a` in `1..=J+1`.
    pub fn cohort_size(&self, adoption: usize) -> usize {
        self.treated_by(adoption) - self.treated_by(adoption - 1)
    }

    pub fn is_one_at_a_time(&self) -> bool {
        self.num_clusters == self.num_rollout_periods() + 1
            && self.cumulative.iter().enumerate().all(|(k, &c)| c == k + 1)
    }

    pub(crate) fn check_period(&self, period: usize) -> Result<()> {
        let rollout = self.num_rollout_periods();
        if period == 0 || period > rollout {
            return Err(Error::PeriodOutOfRange { period, rollout });
        }
        Ok(())
    }

    /// `e_j = I_j / I`. Periods 0 and `J+1` violate positivity and are rejected.
    pub fn propensity(&self, period: usize) -> Result<Probability> {
        self.check_period(period)?;
        Ok(Probability(Rational::new(
            self.treated_by(period) as i128,
            self.num_clusters as i128,
        )))
    }

    /// Float propensities for periods `1..=J`, indexed by `j - 1`.
    pub fn propensities(&self) -> Vec<f64> {
        (1..=self.num_rollout_periods())
            .map(|j| self.treated_by(j) as f64 / self.num_clusters as f64)
            .collect()
    }

    /// The multinomial coefficient `I! / Π_a (I_a − I_{a−1})!`, or `None` on u128 overflow.
    pub fn assignment_count(&self) -> Option<u128> {
        let mut total: u128 = 1;
        let mut placed: u128 = 0;
        for a in 1..=self.num_rollout_periods() + 1 {
            for k in 1..=self.cohort_size(a) as u128 {
                placed += 1;
                // running product of binomials stays integral at every step
                total = total.checked_mul(placed)? / k;
            }
        }
        Some(total)
    }

    /// log10 of the assignment count, usable when the count overflows.
    pub fn log10_assignment_count(&self) -> f64 {
        let ln_fact = |n: usize| (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
        let mut ln = ln_fact(self.num_clusters);
        for a in 1..=self.num_rollout_periods() + 1 {
            ln -= ln_fact(self.cohort_size(a));
        }
        ln / std::f64::consts::LN_10
    }

    pub fn joint_probability(&self, spec: &JointProbabilitySpec) -> Result<Probability> {
        joint::joint_probability(self, spec, DEFAULT_ENUMERATION_CAP)
    }

    /// [`joint_probability`](Self::joint_probability) without the enumeration fallback.
    pub fn closed_form_probability(&self, spec: &JointProbabilitySpec) -> Result<Option<Probability>> {
        joint::closed_form_probability(self, spec)
    }

    pub fn enumerate_assignments(&self, cap: u128) -> Result<Assignments<'_>> {
        Assignments::new(self, cap)
    }

    /// Draws uniformly over all assignments from a seeded ChaCha8 stream.
    pub fn sample_assignment(&self, seed: u64) -> AssignmentRealization {
        self.sample_assignment_with(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Shuffles the cohort labels: a uniform permutation cut at the cumulative counts.
    pub fn sample_assignment_with<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignmentRealization {
        let mut adoption = self.cohort_labels();
        adoption.shuffle(rng);
        AssignmentRealization { adoption }
    }

    /// Adoption times in sorted order: `I_1` ones, then `I_2 − I_1` twos, and so on.
    pub(crate) fn cohort_labels(&self) -> Vec<usize> {
        (1..=self.num_rollout_periods() + 1)
            .flat_map(|a| std::iter::repeat_n(a, self.cohort_size(a)))
            .collect()
    }

    /// Adoption period of the `l`-th position (0-based) in a random line-up of clusters.
    pub fn position_period(&self, position: usize) -> usize {
        (1..=self.num_rollout_periods() + 1)
            .find(|&a| position < self.treated_by(a))
            .expect("position below I")
    }

    pub fn pair_probabilities(&self) -> PairProbabilities {
        PairProbabilities::new(self)
    }
}

/// One randomization draw: the adoption time of every cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentRealization {
    adoption: Vec<usize>,
}

impl AssignmentRealization {
    pub fn new(design: &StepWedgeDesign, adoption: Vec<usize>) -> Result<Self> {
        if adoption.len() != design.num_clusters() {
            return Err(Error::Domain(format!(
                "expected {} adoption times, found {}",
                design.num_clusters(),
                adoption.len()
            )));
        }
        let last = design.num_rollout_periods() + 1;
        if let Some(&a) = adoption.iter().find(|&&a| a == 0 || a > last) {
            return Err(Error::Domain(format!("adoption time {a} outside 1..={last}")));
        }
        for a in 1..=last {
            let n = adoption.iter().filter(|&&x| x == a).count();
            if n != design.cohort_size(a) {
                return Err(Error::Domain(format!(
                    "{n} clusters adopt at {a}, the design requires {}",
                    design.cohort_size(a)
                )));
            }
        }
        Ok(AssignmentRealization { adoption })
    }

    pub(crate) fn from_raw(adoption: Vec<usize>) -> Self {
        AssignmentRealization { adoption }
    }

    pub fn adoption_times(&self) -> &[usize] {
        &self.adoption
    }

    pub fn adoption_time(&self, cluster: usize) -> usize {
        self.adoption[cluster]
    }

    /// `z(i, j) = 1{A_i ≤ j}`; holds for pre- and post-rollout periods too.
    pub fn z(&self, cluster: usize, period: usize) -> bool {
        self.adoption[cluster] <= period
    }

    pub fn num_clusters(&self) -> usize {
        self.adoption.len()
    }
}
