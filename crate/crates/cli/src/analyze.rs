use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;
use swedge_core::data::TrialDataset;
use swedge_core::ht::PairTables;
use swedge_core::inference::{AffineStatistic, IntervalSet, Reference};
use swedge_core::method::{Estimator, Method, VarianceKind};
use swedge_core::StepWedgeDesign;

use crate::error::{CliError, Result};
use crate::output::{self, csv_bytes, read_input, OutputArgs, RunOutput};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Individual-level CSV: cluster,period,z,d,y followed by covariate columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Design JSON, e.g. {"I": 11, "J": 10, "one_at_a_time": true}.
    #[arg(long)]
    pub design: PathBuf,
    /// Estimators to run (repeatable); all six when omitted.
    #[arg(long = "estimator", value_parser = parse::<Estimator>)]
    pub estimators: Vec<Estimator>,
    /// Variance estimators (repeatable); each estimator runs with every compatible one,
    /// or with its default when none is compatible.
    #[arg(long = "variance", value_parser = parse::<VarianceKind>)]
    pub variances: Vec<VarianceKind>,
    /// Reference distribution; `t` (I − 2 df) for regression and `gaussian` for HT by default.
    #[arg(long = "ref", value_parser = parse::<Reference>)]
    pub reference: Option<Reference>,
    /// Level for the extra interval and for the test at `--lambda0`.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Also test H0: λ = lambda0.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn parse<T: std::str::FromStr<Err = swedge_core::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: swedge_core::Error| e.to_string())
}

/// One estimator/variance combination, or the reason it declined.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisRow {
    pub method: String,
    pub estimator: &'static str,
    pub variance: &'static str,
    pub reference: &'static str,
    pub lambda_hat: Option<f64>,
    pub ci90: Option<IntervalSet>,
    pub ci95: Option<IntervalSet>,
    pub alpha: f64,
    pub ci_alpha: Option<IntervalSet>,
    pub tau_at_0: Option<f64>,
    pub p_value_at_0: Option<f64>,
    pub lambda0: Option<f64>,
    pub p_value_at_lambda0: Option<f64>,
    pub reject_at_lambda0: Option<bool>,
    pub df: Option<f64>,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    estimator: &'a str,
    variance: &'a str,
    reference: &'a str,
    lambda_hat: Option<f64>,
    ci90: String,
    ci95: String,
    ci_alpha: String,
    tau_at_0: Option<f64>,
    p_value_at_0: Option<f64>,
    lambda0: Option<f64>,
    p_value_at_lambda0: Option<f64>,
    reject_at_lambda0: Option<bool>,
    df: Option<f64>,
    flags: String,
    error: String,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    method: &'a str,
    level: f64,
    shape: &'static str,
    lower: f64,
    upper: f64,
    lambda_hat: Option<f64>,
}

/// The methods implied by the flags, in estimator order.
pub fn resolve_methods(args: &AnalyzeArgs) -> Result<Vec<(Method, bool)>> {
    let estimators = if args.estimators.is_empty() { Estimator::ALL.to_vec() } else { args.estimators.clone() };
    let mut out = Vec::new();
    for e in estimators {
        let reference = args.reference.unwrap_or_else(|| e.default_reference());
        let compatible: Vec<VarianceKind> = args.variances.iter().copied().filter(|v| v.is_ht() == e.is_ht()).collect();
        if compatible.is_empty() {
            out.push((Method::new(e, e.default_variance(), reference)?, !args.variances.is_empty()));
        } else {
            for v in compatible {
                out.push((Method::new(e, v, reference)?, false));
            }
        }
    }
    Ok(out)
}

fn interval(stat: &AffineStatistic, alpha: f64, flags: &mut Vec<String>) -> Option<IntervalSet> {
    match stat.interval(alpha) {
        Ok(set) => Some(set),
        Err(e) => {
            flags.push(format!("interval: {e}"));
            None
        }
    }
}

pub fn analyze_method(method: &Method, data: &TrialDataset, tables: &PairTables, alpha: f64, lambda0: Option<f64>) -> AnalysisRow {
    let mut row = AnalysisRow {
        method: method.label(),
        estimator: method.estimator().label(),
        variance: method.variance().label(),
        reference: method.reference().label(),
        lambda_hat: None,
        ci90: None,
        ci95: None,
        alpha,
        ci_alpha: None,
        tau_at_0: None,
        p_value_at_0: None,
        lambda0,
        p_value_at_lambda0: None,
        reject_at_lambda0: None,
        df: None,
        flags: Vec::new(),
        error: None,
    };
    let stat = match method.statistic(data, tables) {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.df = stat.df();
    match stat.lambda_hat() {
        Ok(l) => row.lambda_hat = Some(l),
        Err(e) => row.flags.push(e.to_string()),
    }
    row.ci90 = interval(&stat, 0.10, &mut row.flags);
    row.ci95 = interval(&stat, 0.05, &mut row.flags);
    row.ci_alpha = interval(&stat, alpha, &mut row.flags);
    match stat.test(0.0) {
        Ok(t) => {
            row.tau_at_0 = Some(t.tau_hat);
            row.p_value_at_0 = Some(t.p_value);
            row.flags.extend(t.flags);
        }
        Err(e) => row.flags.push(format!("test at 0: {e}")),
    }
    if let Some(l0) = lambda0 {
        match (stat.test(l0), stat.rejects(l0, alpha)) {
            (Ok(t), Ok(r)) => {
                row.p_value_at_lambda0 = Some(t.p_value);
                row.reject_at_lambda0 = Some(r);
            }
            (Err(e), _) | (_, Err(e)) => row.flags.push(format!("test at {l0}: {e}")),
        }
    }
    row
}

fn render_set(set: &Option<IntervalSet>, digits: usize) -> String {
    set.as_ref().map_or_else(|| "-".into(), |s| s.render(digits))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

pub fn render_text(rows: &[AnalysisRow], data: &TrialDataset) -> String {
    let d = data.design();
    let mut out = format!(
        "{} records, I = {}, J = {}, covariates: {}\n\n",
        data.len(),
        d.num_clusters(),
        d.num_rollout_periods(),
        if data.covariate_names().is_empty() { "none".into() } else { data.covariate_names().join(", ") }
    );
    let header = ["method", "lambda_hat", "90% CI", "95% CI", "p(lambda=0)", "notes"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            let notes = match &r.error {
                Some(e) => format!("declined: {e}"),
                None => r.flags.join("; "),
            };
            [r.method.clone(), fmt_opt(r.lambda_hat, 4), render_set(&r.ci90, 4), render_set(&r.ci95, 4), fmt_opt(r.p_value_at_0, 4), notes]
        })
        .collect();
    let widths: Vec<usize> = (0..6).map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0)).collect();
    let line = |cells: Vec<&str>| {
        let s: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    out += &line(header.to_vec());
    for r in &body {
        out += &line(r.iter().map(String::as_str).collect());
    }
    if let Some(l0) = rows.iter().find_map(|r| r.lambda0) {
        out += &format!("\ntest of lambda = {l0} at alpha = {}:\n", rows[0].alpha);
        for r in rows.iter().filter(|r| r.error.is_none()) {
            let verdict = match r.reject_at_lambda0 {
                Some(true) => "reject",
                Some(false) => "do not reject",
                None => "undefined",
            };
            out += &format!("  {:<w$}  p = {}  {verdict}\n", r.method, fmt_opt(r.p_value_at_lambda0, 4), w = widths[0]);
        }
    }
    out
}

fn csv_rows(rows: &[AnalysisRow]) -> Vec<CsvRow<'_>> {
    rows.iter()
        .map(|r| CsvRow {
            method: &r.method,
            estimator: r.estimator,
            variance: r.variance,
            reference: r.reference,
            lambda_hat: r.lambda_hat,
            ci90: render_set(&r.ci90, 6),
            ci95: render_set(&r.ci95, 6),
            ci_alpha: render_set(&r.ci_alpha, 6),
            tau_at_0: r.tau_at_0,
            p_value_at_0: r.p_value_at_0,
            lambda0: r.lambda0,
            p_value_at_lambda0: r.p_value_at_lambda0,
            reject_at_lambda0: r.reject_at_lambda0,
            df: r.df,
            flags: r.flags.join("; "),
            error: r.error.clone().unwrap_or_default(),
        })
        .collect()
}

/// Each connected piece of each interval as one `(lower, upper)` row.
fn plot_rows(rows: &[AnalysisRow]) -> Vec<PlotRow<'_>> {
    let mut out = Vec::new();
    for r in rows {
        for (level, set) in [(0.90, &r.ci90), (0.95, &r.ci95)] {
            let Some(set) = set else { continue };
            let pieces: Vec<(f64, f64)> = match *set {
                IntervalSet::Bounded { lo, hi } => vec![(lo, hi)],
                IntervalSet::TwoRays { hi, lo } => vec![(f64::NEG_INFINITY, hi), (lo, f64::INFINITY)],
                IntervalSet::LeftRay { hi } => vec![(f64::NEG_INFINITY, hi)],
                IntervalSet::RightRay { lo } => vec![(lo, f64::INFINITY)],
                IntervalSet::WholeLine => vec![(f64::NEG_INFINITY, f64::INFINITY)],
                IntervalSet::Point { x } => vec![(x, x)],
                IntervalSet::Empty => vec![],
            };
            for (lower, upper) in pieces {
                out.push(PlotRow { method: &r.method, level, shape: set.kind(), lower, upper, lambda_hat: r.lambda_hat });
            }
        }
    }
    out
}

/// Returns `true` when every method declined.
pub fn run(args: &AnalyzeArgs) -> Result<bool> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Config(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    if args.lambda0.is_some_and(|l| !l.is_finite()) {
        return Err(CliError::Config("--lambda0 must be finite".into()));
    }
    let (design_text, design_digest) = read_input(&args.design)?;
    let design = StepWedgeDesign::from_json_str(&design_text)?;
    let (data_text, data_digest) = read_input(&args.data)?;
    let data = TrialDataset::read_csv(data_text.as_bytes(), design.clone())?;
    let methods = resolve_methods(args)?;

    let tables = PairTables::new(&design);
    let rows: Vec<AnalysisRow> = methods
        .iter()
        .map(|(m, fallback)| {
            let mut row = analyze_method(m, &data, &tables, args.alpha, args.lambda0);
            if *fallback {
                row.flags.insert(0, "default variance (none requested applies)".into());
            }
            row
        })
        .collect();

    let text = render_text(&rows, &data);
    print!("{text}");
    let mut out = RunOutput::create(&args.output)?;
    let report = json!({
        "design": serde_json::from_str::<serde_json::Value>(&design.to_json_string()).map_err(swedge_core::Error::from)?,
        "records": data.len(),
        "covariates": data.covariate_names(),
        "rows": rows,
    });
    out.write_report("analysis", &text, || csv_bytes(&csv_rows(&rows)), &report)?;
    if out.plot_data {
        let bytes = csv_bytes(&plot_rows(&rows))?;
        out.write("analysis_intervals_long.csv", &bytes)?;
    }
    let config = json!({
        "data": args.data,
        "design": args.design,
        "methods": methods.iter().map(|(m, _)| m.label()).collect::<Vec<_>>(),
        "alpha": args.alpha,
        "lambda0": args.lambda0,
    });
    out.finish(output::manifest("analyze", config, None, None, vec![data_digest, design_digest]))?;
    Ok(rows.iter().all(|r| r.error.is_some()))
}
