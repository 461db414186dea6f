#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swedge_core::data::{Record, TrialDataset};
use swedge_core::StepWedgeDesign;

/// SplitMix64, enough for building test data.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
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

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// How a synthetic trial is generated.
#[derive(Debug, Clone)]
pub struct Planted {
    pub design: StepWedgeDesign,
    pub seed: u64,
    pub lambda: f64,
    /// Individuals per cluster-period; fixed when `size_jitter` is zero.
    pub cell_size: usize,
    pub size_jitter: usize,
    /// `P(D = 1)` on control and on intervention; `(0, 1)` gives full compliance.
    pub uptake: (f64, f64),
    pub period_trend: f64,
    pub noise_sd: f64,
}

impl Planted {
    pub fn new(design: StepWedgeDesign, seed: u64, lambda: f64) -> Self {
        Planted { design, seed, lambda, cell_size: 30, size_jitter: 20, uptake: (0.1, 0.9), period_trend: 0.1, noise_sd: 0.5 }
    }

    /// Monotone receipt with `Y = cluster effect + trend·j + 0.5 x + λ D + noise`.
    pub fn dataset(&self) -> TrialDataset {
        let mut rng = Rng::new(self.seed);
        let assignment = self.design.sample_assignment(self.seed ^ 0xa55);
        let mut rows = Vec::new();
        for i in 0..self.design.num_clusters() {
            let shift = 0.05 * rng.normal();
            for j in 0..self.design.num_rollout_periods() + 2 {
                let z = assignment.z(i, j);
                let n = self.cell_size + if self.size_jitter > 0 { (rng.next_u64() % self.size_jitter as u64) as usize } else { 0 };
                for _ in 0..n {
                    let u = rng.uniform();
                    let d = if u < if z { self.uptake.1 } else { self.uptake.0 } { 1.0 } else { 0.0 };
                    let x = rng.normal();
                    let y = shift + self.period_trend * j as f64 + 0.5 * x + self.lambda * d + self.noise_sd * rng.normal();
                    rows.push(Record { cluster: i as i64 + 1, period: j, z, d, y, x: vec![x] });
                }
            }
        }
        TrialDataset::new(self.design.clone(), vec!["x".into()], rows).unwrap()
    }

    /// Writes `data.csv` and `design.json` into `dir`.
    pub fn write(&self, dir: &Path) -> (PathBuf, PathBuf) {
        let data = dir.join("data.csv");
        let design = dir.join("design.json");
        self.dataset().export_csv(&data).unwrap();
        std::fs::write(&design, self.design.to_json_string()).unwrap();
        (data, design)
    }
}

pub fn swedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swedge")).args(args).output().expect("binary runs")
}

pub fn swedge_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swedge")).args(args).env(key, value).output().expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}
