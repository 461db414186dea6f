use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;
use swedge_core::data::TrialDataset;
use swedge_core::diagnostics::{balance_table, duration_tests, render_balance, render_duration};
use swedge_core::StepWedgeDesign;

use crate::error::Result;
use crate::output::{self, csv_bytes, read_input, OutputArgs, RunOutput};

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    /// Covariates for the balance table (repeatable); all when omitted.
    #[arg(long = "covariate")]
    pub covariates: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Serialize)]
struct BalanceLong<'a> {
    covariate: &'a str,
    arm: &'static str,
    mean: f64,
    sd: f64,
}

/// Returns `true` when the duration regressions could not be fitted.
pub fn run(args: &DiagnoseArgs) -> Result<bool> {
    let (design_text, design_digest) = read_input(&args.design)?;
    let design = StepWedgeDesign::from_json_str(&design_text)?;
    let (data_text, data_digest) = read_input(&args.data)?;
    let data = TrialDataset::read_csv(data_text.as_bytes(), design)?;
    let balance = balance_table(&data, &args.covariates)?;
    let duration = duration_tests(&data);

    let mut out = RunOutput::create(&args.output)?;
    let duration_text = match &duration {
        Ok(rows) => render_duration(rows),
        Err(e) => format!("duration tests declined: {e}\n"),
    };
    print!("{duration_text}\n{}", render_balance(&balance));
    match &duration {
        Ok(rows) => out.write_report("duration", &duration_text, || csv_bytes(rows), rows)?,
        Err(e) => out.write_report("duration", &duration_text, || Ok(Vec::new()), &json!({ "error": e.to_string() }))?,
    }
    let balance_text = render_balance(&balance);
    out.write_report("balance", &balance_text, || csv_bytes(&balance), &balance)?;
    if out.plot_data {
        let long: Vec<BalanceLong> = balance
            .iter()
            .flat_map(|b| {
                [
                    BalanceLong { covariate: &b.covariate, arm: "intervention", mean: b.mean_treated, sd: b.sd_treated },
                    BalanceLong { covariate: &b.covariate, arm: "control", mean: b.mean_control, sd: b.sd_control },
                ]
            })
            .collect();
        let bytes = csv_bytes(&long)?;
        out.write("balance_long.csv", &bytes)?;
    }
    let config = json!({ "data": args.data, "design": args.design, "covariates": args.covariates });
    out.finish(output::manifest("diagnose", config, None, None, vec![data_digest, design_digest]))?;
    Ok(duration.is_err())
}
