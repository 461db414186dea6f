//! Monte Carlo harness: the noncompliance data-generating process, replicated
//! randomizations, and bias / MSE / type-I / power summaries per method.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ComplianceClass, PotentialOutcomeTable, TrialDataset};
use crate::design::StepWedgeDesign;
use crate::error::{Error, Result};
use crate::ht::PairTables;
use crate::method::{Estimator, Method, VarianceKind};
use crate::inference::Reference;

/// Environment variable capping the simulation worker count.
pub const THREADS_ENV: &str = "SWEDGE_THREADS";

/// RNG streams per replicate; stream `rep * STREAMS_PER_REP + purpose`.
const STREAMS_PER_REP: u64 = 4;
const STREAM_POPULATION: u64 = 0;
const STREAM_ASSIGNMENT: u64 = 1;
const STREAM_EFFECTS: u64 = 2;

/// How the informative cluster-size term `2 N_ij I / denominator` is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeTermScale {
    /// Denominator `Σ_j N_j` (period totals summed over all periods); the term averages
    /// about `2 / (J+2)`.
    #[default]
    GrandTotal,
    /// Denominator `(J+2)⁻¹ Σ_j N_j`, the mean period total; the term averages about 2.
    PeriodMean,
}

/// Whether the random effect `c` is drawn once per cluster or once per cluster-period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectLevel {
    #[default]
    Cluster,
    ClusterPeriod,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_c_intercept() -> f64 {
    -0.5
}
fn default_c_scale() -> f64 {
    2.5
}
fn default_cluster_var() -> f64 {
    0.1
}
fn default_noise_var() -> f64 {
    0.9
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub informative_size: bool,
    pub design: StepWedgeDesign,
    pub n_reps: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c_intercept")]
    pub c_intercept: f64,
    #[serde(default = "default_c_scale")]
    pub c_scale: f64,
    /// Variance of the cluster effect.
    #[serde(default = "default_cluster_var")]
    pub cluster_effect_var: f64,
    /// Variance of the individual noise.
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default)]
    pub size_term: SizeTermScale,
    #[serde(default)]
    pub effect_level: EffectLevel,
    /// Test the null at this fixed value instead of each replicate's own true `λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_null_lambda: Option<f64>,
}

impl SimScenario {
    pub fn new(name: impl Into<String>, design: StepWedgeDesign, informative_size: bool, n_reps: usize, base_seed: u64, methods: Vec<Method>) -> Self {
        SimScenario {
            name: name.into(),
            informative_size,
            design,
            n_reps,
            base_seed,
            methods,
            alpha: default_alpha(),
            c_intercept: default_c_intercept(),
            c_scale: default_c_scale(),
            cluster_effect_var: default_cluster_var(),
            noise_var: default_noise_var(),
            size_term: SizeTermScale::default(),
            effect_level: EffectLevel::default(),
            fixed_null_lambda: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config(format!("scenario `{}` lists no methods", self.name)));
        }
        crate::inference::check_alpha(self.alpha)?;
        if !(self.c_scale > 0.0 && self.cluster_effect_var >= 0.0 && self.noise_var >= 0.0) {
            return Err(Error::Config(format!("scenario `{}`: scale and variances must be positive", self.name)));
        }
        Ok(())
    }

    /// Cell designs used in the study: `I ∈ {12, 30, 60, 90}` with `J = 5` and `I_j = jI/6`,
    /// plus the one-at-a-time design with `I = 11`, `J = 10`.
    pub fn study_designs() -> Vec<(String, StepWedgeDesign)> {
        let mut out = vec![("I11J10".to_string(), StepWedgeDesign::one_at_a_time(10).expect("valid design"))];
        for i in [12usize, 30, 60, 90] {
            let cum = (1..=5).map(|j| j * i / 6).collect();
            out.push((format!("I{i}J5"), StepWedgeDesign::new(i, cum).expect("valid design")));
        }
        out
    }

    /// Every design × {informative, uninformative} cell with a shared method list.
    pub fn study_grid(n_reps: usize, base_seed: u64, methods: Vec<Method>) -> Vec<SimScenario> {
        let mut out = Vec::new();
        for informative in [true, false] {
            for (name, design) in Self::study_designs() {
                out.push(SimScenario::new(name, design, informative, n_reps, base_seed, methods.clone()));
            }
        }
        out
    }

    /// The estimator/variance/reference triples reported in the study's tables.
    pub fn study_methods() -> Vec<Method> {
        let mut out = Vec::new();
        for e in [Estimator::Unadjusted, Estimator::Ancova1, Estimator::Ancova3] {
            for (v, r) in [(VarianceKind::Cr0, Reference::Gaussian), (VarianceKind::Cr3Ginv, Reference::Gaussian), (VarianceKind::Cr3Ginv, Reference::T)] {
                out.push(Method::new(e, v, r).expect("valid method"));
            }
        }
        for e in [Estimator::Ht, Estimator::HtAdjPrepost, Estimator::HtAdjFull] {
            for v in [VarianceKind::HtSimplified, VarianceKind::HtConservative] {
                out.push(Method::new(e, v, Reference::Gaussian).expect("valid method"));
            }
        }
        out
    }
}

fn stream(scenario: &SimScenario, rep: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.base_seed);
    rng.set_stream(rep as u64 * STREAMS_PER_REP + purpose);
    rng
}

/// The random effects of one replicate: one per cluster, or one per cluster-period
/// (row-major over `(i, j)`), depending on the scenario.
pub fn cluster_effects(scenario: &SimScenario, rep: usize) -> Result<Vec<f64>> {
    let design = &scenario.design;
    let count = match scenario.effect_level {
        EffectLevel::Cluster => design.num_clusters(),
        EffectLevel::ClusterPeriod => design.num_clusters() * (design.num_rollout_periods() + 2),
    };
    let dist = Normal::new(0.0, scenario.cluster_effect_var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = stream(scenario, rep, STREAM_EFFECTS);
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}

/// Draws one finite population from the data-generating process.
pub fn generate_population(scenario: &SimScenario, rep: usize) -> Result<PotentialOutcomeTable> {
    let design = &scenario.design;
    let (num_clusters, rollout) = (design.num_clusters(), design.num_rollout_periods());
    let periods = rollout + 2;
    let mut rng = stream(scenario, rep, STREAM_POPULATION);
    let noise = Normal::new(0.0, scenario.noise_var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;

    let sizes: Vec<usize> = (0..num_clusters * periods)
        .map(|c| {
            let j = (c % periods) as f64;
            (rng.random_range(10.0..90.0) + 2.0 * (j + 1.0).powf(1.5)).round_ties_even() as usize
        })
        .collect();
    let x1: Vec<f64> = (0..num_clusters * periods).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    let per_period = scenario.effect_level == EffectLevel::ClusterPeriod;
    let effects = cluster_effects(scenario, rep)?;
    let effect_of = |i: usize, j: usize| if per_period { effects[i * periods + j] } else { effects[i] };

    let total: usize = sizes.iter().sum();
    let (mut cluster, mut period, mut x2, mut e) =
        (Vec::with_capacity(total), Vec::with_capacity(total), Vec::with_capacity(total), Vec::with_capacity(total));
    for i in 0..num_clusters {
        for j in 0..periods {
            for _ in 0..sizes[i * periods + j] {
                cluster.push(i);
                period.push(j);
                x2.push((i + 1) as f64 / num_clusters as f64 + rng.random_range(-1.0..1.0));
                e.push(noise.sample(&mut rng));
            }
        }
    }

    let mut period_mean = vec![0.0; periods];
    let mut period_count = vec![0usize; periods];
    for (k, &j) in period.iter().enumerate() {
        period_mean[j] += x2[k];
        period_count[j] += 1;
    }
    for j in 0..periods {
        period_mean[j] /= period_count[j].max(1) as f64;
    }

    let size_denominator = match scenario.size_term {
        SizeTermScale::GrandTotal => total as f64,
        SizeTermScale::PeriodMean => total as f64 / periods as f64,
    };
    let size_term = |c: usize| {
        if scenario.informative_size {
            2.0 * sizes[c] as f64 * num_clusters as f64 / size_denominator
        } else {
            0.0
        }
    };

    let (ci, cf) = (scenario.c_intercept, scenario.c_scale);
    let mut y0 = Vec::with_capacity(total);
    let mut y1 = Vec::with_capacity(total);
    let mut class = Vec::with_capacity(total);
    let mut x = Vec::with_capacity(2 * total);
    for k in 0..total {
        let (i, j) = (cluster[k], period[k]);
        let c = i * periods + j;
        let trend = (j + 1) as f64 / periods as f64;
        let dev = x2[k] - period_mean[j];
        let (sq, cube) = (dev * dev, dev * dev * dev);
        let s = size_term(c);
        let untreated = trend + x1[c] + sq + effect_of(i, j) + e[k];
        let treated = untreated + s + 0.5 * x1[c] + cube;
        let always = (ci + trend + s + 0.7 * x1[c] + 0.5 * cube + effect_of(i, j) + e[k]) / cf;
        let never = (ci - trend - s - 0.4 * x1[c] + sq - effect_of(i, j) + e[k]) / cf;
        let (wa, wn) = (always.exp(), never.exp());
        let u: f64 = rng.random::<f64>() * (1.0 + wa + wn);
        let cls = if u < 1.0 {
            ComplianceClass::Complier
        } else if u < 1.0 + wa {
            ComplianceClass::AlwaysTaker
        } else {
            ComplianceClass::NeverTaker
        };
        // Outcomes are indexed by treatment received; map them onto assignment.
        let (d0, d1) = cls.receipt();
        y0.push(if d0 { treated } else { untreated });
        y1.push(if d1 { treated } else { untreated });
        class.push(cls);
        x.push(x1[c]);
        x.push(x2[k]);
    }
    PotentialOutcomeTable::new(design.clone(), vec!["x1".into(), "x2".into()], cluster, period, y0, y1, class, x, true)
}

/// One replicate: the population and the trial observed under a fresh randomization.
/// Deterministic in `(base_seed, rep)`.
pub fn generate_trial(scenario: &SimScenario, rep: usize) -> Result<(TrialDataset, PotentialOutcomeTable)> {
    let table = generate_population(scenario, rep)?;
    let assignment = scenario.design.sample_assignment_with(&mut stream(scenario, rep, STREAM_ASSIGNMENT));
    Ok((table.materialize(&assignment), table))
}

/// What one method produced on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    /// `None` when fitting failed.
    pub fitted: bool,
    pub lambda_hat: Option<f64>,
    pub reject_null: Option<bool>,
    pub reject_zero: Option<bool>,
    /// The `λ = 0` deviate and the ITT deviate differ in any bit, or only one is defined.
    pub itt_discordant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub rep: usize,
    pub true_lambda: f64,
    pub true_tau: f64,
    pub compliance_rate: f64,
    pub methods: Vec<MethodOutcome>,
}

fn evaluate(method: &Method, data: &TrialDataset, tables: &PairTables, null: f64, alpha: f64) -> MethodOutcome {
    let Ok(stat) = method.statistic(data, tables) else {
        let itt_discordant = method.itt_test(data, tables).is_ok();
        return MethodOutcome { fitted: false, lambda_hat: None, reject_null: None, reject_zero: None, itt_discordant };
    };
    let at_zero = stat.test(0.0).ok();
    let itt = method.itt_test(data, tables).ok();
    let itt_discordant = match (&at_zero, &itt) {
        (Some(a), Some(b)) => a.deviate.map(f64::to_bits) != b.deviate.map(f64::to_bits) || a.tau_hat.to_bits() != b.tau_hat.to_bits(),
        (None, None) => false,
        _ => true,
    };
    MethodOutcome {
        fitted: true,
        lambda_hat: stat.lambda_hat().ok(),
        reject_null: stat.rejects(null, alpha).ok(),
        reject_zero: stat.rejects(0.0, alpha).ok(),
        itt_discordant,
    }
}

pub fn run_replicate(scenario: &SimScenario, tables: &PairTables, rep: usize) -> Result<ReplicateOutcome> {
    let (data, table) = generate_trial(scenario, rep)?;
    let truth = table.true_estimands()?;
    let null = scenario.fixed_null_lambda.unwrap_or(truth.lambda);
    let methods = scenario.methods.iter().map(|m| evaluate(m, &data, tables, null, scenario.alpha)).collect();
    Ok(ReplicateOutcome { rep, true_lambda: truth.lambda, true_tau: truth.tau, compliance_rate: truth.compliance_rate, methods })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub estimator: String,
    pub variance: String,
    pub reference: String,
    /// Replicates with a point estimate.
    pub n_estimates: usize,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub n_null_tests: usize,
    #[serde(rename = "type.I")]
    pub type_i: Option<f64>,
    pub n_zero_tests: usize,
    pub power: Option<f64>,
    /// Replicates where the fit itself failed.
    pub declined_fits: usize,
    /// Fitted replicates without a defined estimate or test.
    pub degenerate: usize,
    pub itt_discordant: usize,
}

/// Reduces per-replicate outcomes (in replicate order) into one summary.
pub fn summarize(method: &Method, truths: &[f64], outcomes: &[MethodOutcome]) -> MethodSummary {
    let (mut n_est, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    let (mut n_null, mut rej_null, mut n_zero, mut rej_zero) = (0usize, 0usize, 0usize, 0usize);
    let (mut declined, mut degenerate, mut discordant) = (0usize, 0usize, 0usize);
    for (o, &truth) in outcomes.iter().zip(truths) {
        discordant += usize::from(o.itt_discordant);
        if !o.fitted {
            declined += 1;
            continue;
        }
        if o.lambda_hat.is_none() || o.reject_null.is_none() || o.reject_zero.is_none() {
            degenerate += 1;
        }
        if let Some(l) = o.lambda_hat {
            let err = l - truth;
            n_est += 1;
            sum += err;
            sum_sq += err * err;
        }
        if let Some(r) = o.reject_null {
            n_null += 1;
            rej_null += usize::from(r);
        }
        if let Some(r) = o.reject_zero {
            n_zero += 1;
            rej_zero += usize::from(r);
        }
    }
    let ratio = |a: f64, n: usize| (n > 0).then(|| a / n as f64);
    MethodSummary {
        method: method.label(),
        estimator: method.estimator().label().into(),
        variance: method.variance().label().into(),
        reference: method.reference().label().into(),
        n_estimates: n_est,
        bias: ratio(sum, n_est),
        mse: ratio(sum_sq, n_est),
        n_null_tests: n_null,
        type_i: ratio(rej_null as f64, n_null),
        n_zero_tests: n_zero,
        power: ratio(rej_zero as f64, n_zero),
        declined_fits: declined,
        degenerate,
        itt_discordant: discordant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cell: String,
    pub informative_size: bool,
    pub n_reps: usize,
    pub base_seed: u64,
    pub alpha: f64,
    pub methods: Vec<MethodSummary>,
    pub true_lambda: Vec<f64>,
    pub true_tau: Vec<f64>,
    pub compliance_rate: Vec<f64>,
}

impl SimReport {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == label)
    }

    pub fn mean_compliance(&self) -> f64 {
        self.compliance_rate.iter().sum::<f64>() / self.compliance_rate.len().max(1) as f64
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every replicate of one cell in parallel, reducing in replicate order.
pub fn run_cell_with_threads(scenario: &SimScenario, threads: Option<usize>) -> Result<SimReport> {
    scenario.validate()?;
    let tables = PairTables::new(&scenario.design);
    let reps: Vec<ReplicateOutcome> =
        with_pool(threads, || (0..scenario.n_reps).into_par_iter().map(|r| run_replicate(scenario, &tables, r)).collect::<Result<_>>())??;
    let truths: Vec<f64> = reps.iter().map(|r| r.true_lambda).collect();
    let methods = scenario
        .methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let outcomes: Vec<MethodOutcome> = reps.iter().map(|r| r.methods[m]).collect();
            summarize(method, &truths, &outcomes)
        })
        .collect();
    Ok(SimReport {
        cell: scenario.name.clone(),
        informative_size: scenario.informative_size,
        n_reps: scenario.n_reps,
        base_seed: scenario.base_seed,
        alpha: scenario.alpha,
        methods,
        true_lambda: truths,
        true_tau: reps.iter().map(|r| r.true_tau).collect(),
        compliance_rate: reps.iter().map(|r| r.compliance_rate).collect(),
    })
}

/// [`run_cell_with_threads`] honoring [`THREADS_ENV`].
pub fn run_cell(scenario: &SimScenario) -> Result<SimReport> {
    run_cell_with_threads(scenario, threads_from_env()?)
}

pub fn run_grid(scenarios: &[SimScenario]) -> Result<Vec<SimReport>> {
    let threads = threads_from_env()?;
    scenarios.iter().map(|s| run_cell_with_threads(s, threads)).collect()
}

/// One cell × method line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(rename = "IJ")]
    pub cell: String,
    pub method: String,
    pub inform: bool,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    #[serde(rename = "type.I")]
    pub type_i: Option<f64>,
    pub power: Option<f64>,
    pub declined: usize,
}

pub fn summary_rows(reports: &[SimReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.methods.iter().map(|m| SummaryRow {
                cell: r.cell.clone(),
                method: m.method.clone(),
                inform: r.informative_size,
                bias: m.bias,
                mse: m.mse,
                type_i: m.type_i,
                power: m.power,
                declined: m.declined_fits + m.degenerate,
            })
        })
        .collect()
}

/// Long format: one row per cell × method × metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    #[serde(rename = "IJ")]
    pub cell: String,
    pub inform: bool,
    pub method: String,
    pub metric: String,
    pub value: Option<f64>,
}

pub fn long_rows(reports: &[SimReport]) -> Vec<LongRow> {
    summary_rows(reports)
        .into_iter()
        .flat_map(|s| {
            [("bias", s.bias), ("mse", s.mse), ("type.I", s.type_i), ("power", s.power), ("declined", Some(s.declined as f64))]
                .into_iter()
                .map(move |(metric, value)| LongRow { cell: s.cell.clone(), inform: s.inform, method: s.method.clone(), metric: metric.into(), value })
        })
        .collect()
}

pub fn render_summary(reports: &[SimReport]) -> String {
    let rows = summary_rows(reports);
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut out = format!("{:<7} {:<width$} {:<6} {:>7} {:>7} {:>7} {:>7} {:>8}\n", "IJ", "method", "inform", "bias", "mse", "type.I", "power", "declined");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<7} {:<width$} {:<6} {:>7} {:>7} {:>7} {:>7} {:>8}",
            r.cell,
            r.method,
            if r.inform { "TRUE" } else { "FALSE" },
            fmt(r.bias),
            fmt(r.mse),
            fmt(r.type_i),
            fmt(r.power),
            r.declined
        );
    }
    out
}

/// Writes `results.csv` (long format) and `results.json` (full reports) into `dir`.
pub fn write_results(reports: &[SimReport], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    for row in long_rows(reports) {
        w.serialize(row)?;
    }
    w.flush()?;
    std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(reports)?)?;
    Ok(())
}
