use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;
use swedge_core::design::DEFAULT_ENUMERATION_CAP;
use swedge_core::StepWedgeDesign;

use crate::error::Result;
use crate::output::{self, csv_bytes, read_input, OutputArgs, RunOutput};

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Design JSON.
    #[arg(long)]
    pub design: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodRow {
    pub period: usize,
    /// Clusters treated by this period.
    pub treated: usize,
    /// Clusters crossing over in this period.
    pub crossing: usize,
    pub propensity: String,
    pub propensity_value: f64,
    /// A single cluster crosses over, or a single cluster is on one arm, so some
    /// pairwise assignment probabilities vanish and variance corrections apply.
    pub flagged: bool,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub clusters: usize,
    pub rollout_periods: usize,
    pub one_at_a_time: bool,
    pub periods: Vec<PeriodRow>,
    pub assignments: Option<String>,
    pub log10_assignments: f64,
    pub enumerable: bool,
    pub enumeration_cap: String,
    pub enumerability: String,
}

pub fn probe(design: &StepWedgeDesign) -> Result<ProbeReport> {
    let n = design.num_clusters();
    let mut periods = Vec::new();
    for j in 1..=design.num_rollout_periods() {
        let e = design.propensity(j)?;
        let treated = design.treated_by(j);
        let crossing = design.cohort_size(j);
        let mut reasons = Vec::new();
        if crossing == 1 {
            reasons.push("one cluster crosses over");
        }
        if treated == 1 {
            reasons.push("one cluster treated");
        }
        if n - treated == 1 {
            reasons.push("one cluster on control");
        }
        periods.push(PeriodRow {
            period: j,
            treated,
            crossing,
            propensity: e.exact().to_string(),
            propensity_value: e.value(),
            flagged: !reasons.is_empty(),
            reason: reasons.join("; "),
        });
    }
    let count = design.assignment_count();
    let enumerable = count.is_some_and(|c| c <= DEFAULT_ENUMERATION_CAP);
    let enumerability = match count {
        Some(c) if enumerable => format!("enumerable: {c} assignments"),
        Some(c) => format!("not enumerable: {c} assignments exceed the cap of {DEFAULT_ENUMERATION_CAP}"),
        None => format!("not enumerable: about 10^{:.1} assignments", design.log10_assignment_count()),
    };
    Ok(ProbeReport {
        clusters: n,
        rollout_periods: design.num_rollout_periods(),
        one_at_a_time: design.is_one_at_a_time(),
        periods,
        assignments: count.map(|c| c.to_string()),
        log10_assignments: design.log10_assignment_count(),
        enumerable,
        enumeration_cap: DEFAULT_ENUMERATION_CAP.to_string(),
        enumerability,
    })
}

pub fn render_text(r: &ProbeReport) -> String {
    let mut out = format!(
        "I = {}, J = {}{}\n\nperiod  treated  crossing  e_j             flag\n",
        r.clusters,
        r.rollout_periods,
        if r.one_at_a_time { " (one-at-a-time)" } else { "" }
    );
    for p in &r.periods {
        let e = format!("{} = {:.4}", p.propensity, p.propensity_value);
        let line = format!("{:>6}  {:>7}  {:>8}  {e:<14}  {}", p.period, p.treated, p.crossing, if p.flagged { &p.reason } else { "" });
        out += line.trim_end();
        out.push('\n');
    }
    let flagged = r.periods.iter().filter(|p| p.flagged).count();
    out += &format!("\nflagged periods: {flagged} of {}\n{}\n", r.rollout_periods, r.enumerability);
    out
}

pub fn run(args: &ProbeArgs) -> Result<()> {
    let (text, digest) = read_input(&args.design)?;
    let design = StepWedgeDesign::from_json_str(&text)?;
    let report = probe(&design)?;
    let rendered = render_text(&report);
    print!("{rendered}");
    let mut out = RunOutput::create(&args.output)?;
    out.write_report("design_probe", &rendered, || csv_bytes(&report.periods), &report)?;
    if out.plot_data {
        let bytes = csv_bytes(&report.periods)?;
        out.write("design_probe_long.csv", &bytes)?;
    }
    out.finish(output::manifest("design-probe", json!({ "design": args.design }), None, None, vec![digest]))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_at_a_time_flags_every_period() {
        let r = probe(&StepWedgeDesign::one_at_a_time(10).unwrap()).unwrap();
        assert!(r.periods.iter().all(|p| p.flagged));
        assert_eq!(r.periods[0].propensity, "1/11");
        assert_eq!(r.periods[9].reason, "one cluster crosses over; one cluster on control");
        assert_eq!(r.enumerability, "not enumerable: 39916800 assignments exceed the cap of 1000000");
    }

    #[test]
    fn balanced_cohorts_are_not_flagged() {
        let r = probe(&StepWedgeDesign::new(6, vec![2, 4]).unwrap()).unwrap();
        assert!(r.periods.iter().all(|p| !p.flagged && p.reason.is_empty()));
        assert_eq!(r.periods[1].propensity, "2/3");
    }

    #[test]
    fn single_cluster_on_one_arm_is_flagged() {
        let r = probe(&StepWedgeDesign::new(6, vec![1, 3, 5]).unwrap()).unwrap();
        let flags: Vec<bool> = r.periods.iter().map(|p| p.flagged).collect();
        assert_eq!(flags, [true, false, true]);
        assert_eq!(r.periods[2].reason, "one cluster on control");
    }

    #[test]
    fn large_designs_are_not_enumerable() {
        let r = probe(&StepWedgeDesign::new(90, vec![15, 30, 45, 60, 75]).unwrap()).unwrap();
        assert!(!r.enumerable);
        assert!(r.enumerability.starts_with("not enumerable"), "{}", r.enumerability);
    }
}
