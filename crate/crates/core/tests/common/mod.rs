//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use swedge_core::StepWedgeDesign;

/// Every adoption vector in `{1..=J+1}^I` whose cohort sizes match the design,
/// found by brute force over all `(J+1)^I` vectors.
pub fn brute_force_adoptions(design: &StepWedgeDesign) -> Vec<Vec<usize>> {
    let n = design.num_clusters();
    let last = design.num_rollout_periods() + 1;
    let mut out = Vec::new();
    let mut v = vec![1usize; n];
    loop {
        if (1..=last).all(|a| v.iter().filter(|&&x| x == a).count() == design.cohort_size(a)) {
            out.push(v.clone());
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            if v[k] < last {
                v[k] += 1;
                break;
            }
            v[k] = 1;
            k += 1;
        }
    }
}

/// All valid designs with `2 ≤ I ≤ max_clusters` and `1 ≤ J ≤ max_periods`.
pub fn small_designs(max_clusters: usize, max_periods: usize) -> Vec<StepWedgeDesign> {
    fn grow(i: usize, j: usize, prefix: &mut Vec<usize>, out: &mut Vec<StepWedgeDesign>) {
        if prefix.len() == j {
            out.push(StepWedgeDesign::new(i, prefix.clone()).unwrap());
            return;
        }
        let start = prefix.last().copied().unwrap_or(1);
        for c in start..i {
            prefix.push(c);
            grow(i, j, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for i in 2..=max_clusters {
        for j in 1..=max_periods {
            grow(i, j, &mut Vec::new(), &mut out);
        }
    }
    out
}

/// Deterministic pseudo-random stream for building test tables (SplitMix64).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub mod oracles;

/// A trial with `p` covariates, random binary receipt correlated with assignment and an
/// outcome carrying a planted receipt effect `effect`.
pub fn random_trial(design: &StepWedgeDesign, seed: u64, p: usize, effect: f64) -> swedge_core::data::TrialDataset {
    use swedge_core::data::{Record, TrialDataset};
    let mut rng = TestRng::new(seed);
    let assignment = design.sample_assignment(seed ^ 0x5eed);
    let mut rows = Vec::new();
    for i in 0..design.num_clusters() {
        let shift = rng.normal() * 0.3;
        for j in 0..design.num_rollout_periods() + 2 {
            for _ in 0..3 + rng.below(5) {
                let z = assignment.z(i, j);
                let x: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
                let d = if rng.uniform() < if z { 0.7 } else { 0.2 } { 1.0 } else { 0.0 };
                let y = shift + 0.2 * j as f64 + x.iter().sum::<f64>() * 0.5 + effect * d + rng.normal();
                rows.push(Record { cluster: i as i64 + 100, period: j, z, d, y, x });
            }
        }
    }
    let names = (0..p).map(|c| format!("x{c}")).collect();
    TrialDataset::new(design.clone(), names, rows).unwrap()
}
