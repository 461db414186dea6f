use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use swedge_core::method::Method;
use swedge_core::sim::{self, SimReport, SimScenario};

use crate::error::{CliError, Result};
use crate::output::{self, csv_bytes, read_input, to_json, Format, OutputArgs, RunOutput};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario JSON: one scenario, an array of scenarios, or a grid request such as
    /// {"grid": "study", "n_reps": 1000, "base_seed": 1}.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Replaces every scenario's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces every scenario's replicate count.
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// The study grid, optionally narrowed to some cells or one size setting.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRequest {
    grid: String,
    n_reps: usize,
    base_seed: u64,
    #[serde(default)]
    methods: Option<Vec<Method>>,
    #[serde(default)]
    cells: Option<Vec<String>>,
    #[serde(default)]
    informative_size: Option<bool>,
}

pub fn parse_scenarios(text: &str) -> Result<Vec<SimScenario>> {
    let value: Value = serde_json::from_str(text).map_err(swedge_core::Error::from)?;
    let scenarios = match value {
        Value::Array(_) => serde_json::from_value::<Vec<SimScenario>>(value).map_err(swedge_core::Error::from)?,
        Value::Object(ref m) if m.contains_key("grid") => {
            let g: GridRequest = serde_json::from_value(value).map_err(swedge_core::Error::from)?;
            if g.grid != "study" {
                return Err(CliError::Config(format!("unknown grid `{}` (expected `study`)", g.grid)));
            }
            let methods = g.methods.unwrap_or_else(SimScenario::study_methods);
            let known: Vec<String> = SimScenario::study_designs().into_iter().map(|(n, _)| n).collect();
            if let Some(unknown) = g.cells.iter().flatten().find(|c| !known.contains(c)) {
                return Err(CliError::Config(format!("unknown cell `{unknown}` (expected one of {})", known.join(", "))));
            }
            SimScenario::study_grid(g.n_reps, g.base_seed, methods)
                .into_iter()
                .filter(|s| g.cells.as_ref().is_none_or(|c| c.contains(&s.name)))
                .filter(|s| g.informative_size.is_none_or(|i| i == s.informative_size))
                .collect()
        }
        _ => vec![serde_json::from_value::<SimScenario>(value).map_err(swedge_core::Error::from)?],
    };
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}

#[derive(Serialize)]
struct TruthRow<'a> {
    #[serde(rename = "IJ")]
    cell: &'a str,
    inform: bool,
    rep: usize,
    true_lambda: f64,
    true_tau: f64,
    compliance_rate: f64,
}

fn truth_rows(reports: &[SimReport]) -> Vec<TruthRow<'_>> {
    reports
        .iter()
        .flat_map(|r| {
            (0..r.n_reps).map(move |k| TruthRow {
                cell: &r.cell,
                inform: r.informative_size,
                rep: k,
                true_lambda: r.true_lambda[k],
                true_tau: r.true_tau[k],
                compliance_rate: r.compliance_rate[k],
            })
        })
        .collect()
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let threads = sim::threads_from_env()?;
    let (text, digest) = read_input(&args.scenario)?;
    let mut scenarios = parse_scenarios(&text)?;
    for s in &mut scenarios {
        if let Some(seed) = args.seed {
            s.base_seed = seed;
        }
        if let Some(n) = args.reps {
            s.n_reps = n;
        }
    }
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        eprintln!("running {} ({}) with {} reps", s.name, if s.informative_size { "informative" } else { "uninformative" }, s.n_reps);
        reports.push(sim::run_cell_with_threads(s, threads)?);
    }

    let summary = sim::render_summary(&reports);
    print!("{summary}");
    let mut out = RunOutput::create(&args.output)?;
    if out.wants(Format::Text) {
        out.write("summary.txt", summary.as_bytes())?;
    }
    if out.wants(Format::Csv) {
        let bytes = csv_bytes(&sim::long_rows(&reports))?;
        out.write("results.csv", &bytes)?;
    }
    if out.wants(Format::Json) {
        let bytes = to_json(&reports)?;
        out.write("results.json", &bytes)?;
    }
    if out.plot_data {
        let bytes = csv_bytes(&truth_rows(&reports))?;
        out.write("replicate_truths_long.csv", &bytes)?;
    }
    let config = json!({ "scenario": args.scenario, "scenarios": scenarios });
    let seed = scenarios.first().map(|s| s.base_seed);
    out.finish(output::manifest("simulate", config, seed, threads, vec![digest]))?;
    Ok(())
}
