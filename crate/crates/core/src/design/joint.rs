//! Exact joint assignment probabilities of orders 2 to 4.
//!
//! A query is canonicalized before dispatch: duplicate cells are merged, entries are
//! sorted by period, and clusters are relabeled by first appearance. The result is
//! looked up in the closed-form tables for same- and distinct-cluster patterns. Every
//! table entry is checked against exhaustive enumeration in the test suite; the
//! handful of printed forms that disagreed with enumeration are stored corrected.
//! Order-4 queries with three arms alike have no closed form and are enumerated.

use num_traits::Zero;

use super::{Probability, Rational, StepWedgeDesign};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_z(z: bool) -> Self {
        if z {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn is_treated(self) -> bool {
        self == Arm::Treated
    }
}

/// Event `Z_{cluster, period} = arm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellQuery {
    pub cluster: usize,
    pub period: usize,
    pub arm: Arm,
}

impl CellQuery {
    pub fn new(cluster: usize, period: usize, arm: Arm) -> Self {
        CellQuery { cluster, period, arm }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointProbabilitySpec {
    entries: Vec<CellQuery>,
}

impl JointProbabilitySpec {
    pub fn new(entries: Vec<CellQuery>) -> Result<Self> {
        if !(2..=4).contains(&entries.len()) {
            return Err(Error::Domain(format!(
                "a joint probability needs 2 to 4 entries, found {}",
                entries.len()
            )));
        }
        Ok(JointProbabilitySpec { entries })
    }

    pub fn entries(&self) -> &[CellQuery] {
        &self.entries
    }
}

enum Canonical {
    Known(Probability),
    Cells(Vec<CellQuery>),
}

/// Validates, merges duplicate cells and sorts by period.
fn canonicalize(design: &StepWedgeDesign, spec: &JointProbabilitySpec) -> Result<Canonical> {
    for cell in spec.entries() {
        design.check_period(cell.period)?;
        if cell.cluster >= design.num_clusters() {
            return Err(Error::Domain(format!(
                "cluster index {} outside 0..{}",
                cell.cluster,
                design.num_clusters()
            )));
        }
    }

    let mut unique: Vec<CellQuery> = Vec::with_capacity(4);
    for &cell in spec.entries() {
        match unique.iter().find(|u| u.cluster == cell.cluster && u.period == cell.period) {
            Some(u) if u.arm != cell.arm => return Ok(Canonical::Known(Probability::new(Rational::zero()))),
            Some(_) => {}
            None => unique.push(cell),
        }
    }
    if unique.len() == 1 {
        let e = design.propensity(unique[0].period)?;
        return Ok(Canonical::Known(if unique[0].arm.is_treated() { e } else { e.complement() }));
    }
    unique.sort_by_key(|c| c.period);
    Ok(Canonical::Cells(unique))
}

fn tabulated(design: &StepWedgeDesign, cells: &[CellQuery]) -> Option<Probability> {
    period_sorted_orderings(cells).iter().find_map(|o| closed_form(design, o)).map(Probability::new)
}

pub(super) fn joint_probability(
    design: &StepWedgeDesign,
    spec: &JointProbabilitySpec,
    cap: u128,
) -> Result<Probability> {
    match canonicalize(design, spec)? {
        Canonical::Known(p) => Ok(p),
        Canonical::Cells(cells) => match tabulated(design, &cells) {
            Some(p) => Ok(p),
            None => by_enumeration(design, &cells, cap),
        },
    }
}

/// The closed-form value only; `None` for patterns that are enumerated instead.
pub(super) fn closed_form_probability(design: &StepWedgeDesign, spec: &JointProbabilitySpec) -> Result<Option<Probability>> {
    Ok(match canonicalize(design, spec)? {
        Canonical::Known(p) => Some(p),
        Canonical::Cells(cells) => tabulated(design, &cells),
    })
}

/// All orderings of period-sorted cells that keep periods non-decreasing; ties may swap.
fn period_sorted_orderings(cells: &[CellQuery]) -> Vec<Vec<CellQuery>> {
    fn extend(rest: &[CellQuery], prefix: &mut Vec<CellQuery>, out: &mut Vec<Vec<CellQuery>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        let first_period = rest[0].period;
        for k in 0..rest.len() {
            if rest[k].period != first_period {
                break;
            }
            let mut remaining = rest.to_vec();
            let cell = remaining.remove(k);
            prefix.push(cell);
            extend(&remaining, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(cells, &mut Vec::with_capacity(cells.len()), &mut out);
    out
}

fn by_enumeration(design: &StepWedgeDesign, cells: &[CellQuery], cap: u128) -> Result<Probability> {
    let describe = || {
        let arms: String = cells.iter().map(|c| if c.arm.is_treated() { '1' } else { '0' }).collect();
        format!("arm pattern {arms} over {} distinct clusters", distinct_clusters(cells))
    };
    let assignments = design.enumerate_assignments(cap).map_err(|_| Error::Untabulated(describe()))?;
    let total = assignments.total();
    let hits = assignments
        .filter(|a| cells.iter().all(|c| a.z(c.cluster, c.period) == c.arm.is_treated()))
        .count();
    Ok(Probability::new(Rational::new(hits as i128, total as i128)))
}

fn distinct_clusters(cells: &[CellQuery]) -> usize {
    let mut seen: Vec<usize> = cells.iter().map(|c| c.cluster).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn q(num: i128, den: i128) -> Rational {
    debug_assert!(den != 0, "closed form evaluated outside its domain");
    Rational::new(num, den)
}

/// Closed form for period-sorted cells, or `None` when the pattern is not tabulated.
/// `a ≤ b ≤ c ≤ d` hold the cumulative counts `I_a .. I_d` at the sorted periods.
fn closed_form(design: &StepWedgeDesign, cells: &[CellQuery]) -> Option<Rational> {
    let arms: String = cells.iter().map(|c| if c.arm.is_treated() { '1' } else { '0' }).collect();
    let mut labels: Vec<usize> = Vec::with_capacity(4);
    let pattern: Vec<u8> = cells
        .iter()
        .map(|c| match labels.iter().position(|&l| l == c.cluster) {
            Some(k) => k as u8,
            None => {
                labels.push(c.cluster);
                (labels.len() - 1) as u8
            }
        })
        .collect();
    let mut counts = [0i128; 4];
    for (slot, c) in counts.iter_mut().zip(cells) {
        *slot = design.treated_by(c.period) as i128;
    }
    let [a, b, c, d] = counts;
    let n = design.num_clusters() as i128;
    let zero = Rational::zero();
    let one = Rational::from_integer(1);

    let p = match (arms.as_str(), pattern.as_slice()) {
        // same cluster, a < b
        ("11", [0, 0]) => q(a, n),
        ("01", [0, 0]) => q(b - a, n),
        ("00", [0, 0]) => one - q(b, n),
        ("10", [0, 0]) => zero,
        // distinct clusters, a ≤ b
        ("11", [0, 1]) => q(a, n) * q(b - 1, n - 1),
        ("01", [0, 1]) => q(b - a, n) * q(b - 1, n - 1) + (one - q(b, n)) * q(b, n - 1),
        ("00", [0, 1]) => (one - q(b, n)) * q(n - a - 1, n - 1),
        ("10", [0, 1]) => q(a, n) * q(n - b, n - 1),
        ("000", [0, 0, 0]) => q(n - c, n),
        ("000", [0, 0, 1]) => q(n - b - 1, n - 1) * q(n - c, n),
        ("000", [0, 1, 0]) => q(n - b - 1, n - 1) * q(n - c, n),
        ("000", [0, 1, 1]) => q(n - a - 1, n - 1) * q(n - c, n),
        ("000", [0, 1, 2]) => q(n - a - 2, n - 2) * q(n - b - 1, n - 1) * q(n - c, n),
        ("001", [0, 0, 0]) => q(c - b, n),
        ("001", [0, 0, 1]) => q(n - c, n) * q(c, n - 1) + q(c - b, n) * q(c - 1, n - 1),
        ("001", [0, 1, 0]) => q(b - a, n) * q(n - b, n - 1) + q(c - b, n) * q(n - b - 1, n - 1),
        ("001", [0, 1, 1]) => q(c - b, n) * q(n - a - 1, n - 1),
        ("001", [0, 1, 2]) => q(a, n) * q(n - b, n - 1) * q(n - a - 1, n - 2) + q(b - a, n) * q(n - b, n - 1) * q(n - a - 2, n - 2) + q(c - b, n) * q(n - b - 1, n - 1) * q(n - a - 2, n - 2),
        ("010", [0, 0, 1]) => q(b - a, n) * q(n - c, n - 1),
        ("010", [0, 1, 0]) => q(n - c, n) * q(b, n - 1),
        ("010", [0, 1, 2]) => q(a, n) * q(n - c, n - 1) * q(n - a - 1, n - 2) + q(b - a, n) * q(n - c, n - 1) * q(n - a - 2, n - 2),
        ("011", [0, 0, 0]) => q(b - a, n),
        ("011", [0, 0, 1]) => q(b - a, n) * q(c - 1, n - 1),
        ("011", [0, 1, 0]) => q(b - a, n) * q(c - a - 1, n - 1) + q(a, n) * q(c - a, n - 1),
        ("011", [0, 1, 1]) => q(b - a, n) * q(b - 1, n - 1) + q(n - b, n) * q(b, n - 1),
        ("011", [0, 1, 2]) => q(b - a, n) * q(b - 1, n - 1) * q(c - 2, n - 2) + q(c - b, n) * q(b, n - 1) * q(c - 2, n - 2) + q(n - c, n) * q(b, n - 1) * q(c - 1, n - 2),
        ("100", [0, 1, 1]) => q(a, n) * q(n - c, n - 1),
        ("100", [0, 1, 2]) => q(a, n) * q(n - b - 1, n - 2) * q(n - c, n - 1),
        ("101", [0, 1, 0]) => q(a, n) * q(n - b, n - 1),
        ("101", [0, 1, 1]) => q(a, n) * q(c - b, n - 1),
        ("101", [0, 1, 2]) => q(a, n) * q(c - b, n - 1) * q(n - b - 1, n - 2) + q(a, n) * q(b - 1, n - 1) * q(n - b, n - 2),
        ("110", [0, 0, 1]) => q(a, n) * q(n - c, n - 1),
        ("110", [0, 1, 2]) => q(a, n) * q(b - 1, n - 1) * q(n - c, n - 2),
        ("111", [0, 0, 0]) => q(a, n),
        ("111", [0, 0, 1]) => q(a, n) * q(c - 1, n - 1),
        ("111", [0, 1, 0]) => q(a, n) * q(b - 1, n - 1),
        ("111", [0, 1, 1]) => q(a, n) * q(b - 1, n - 1),
        ("111", [0, 1, 2]) => q(a, n) * q(b - 1, n - 1) * q(c - 2, n - 2),
        ("0000", [0, 0, 0, 0]) => q(n - d, n),
        ("0000", [0, 0, 0, 1]) => q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 0, 1, 0]) => q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 0, 1, 1]) => q(n - b - 1, n - 1) * q(n - d, n),
        ("0000", [0, 0, 1, 2]) => q(n - b - 2, n - 2) * q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 0, 0]) => q(n - b - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 0, 1]) => q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 0, 2]) => q(n - b - 2, n - 2) * q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 1, 0]) => q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 1, 1]) => q(n - a - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 1, 2]) => q(n - a - 2, n - 2) * q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 2, 0]) => q(n - b - 2, n - 2) * q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 2, 1]) => q(n - a - 2, n - 2) * q(n - c - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 2, 2]) => q(n - a - 2, n - 2) * q(n - b - 1, n - 1) * q(n - d, n),
        ("0000", [0, 1, 2, 3]) => q(n - a - 3, n - 3) * q(n - b - 2, n - 2) * q(n - c - 1, n - 1) * q(n - d, n),
        ("0011", [0, 0, 0, 0]) => q(c - b, n),
        ("0011", [0, 0, 0, 1]) => q(c - b, n) * q(d - 1, n - 1),
        ("0011", [0, 0, 1, 0]) => q(c - b, n) * q(c - 1, n - 1) + q(d - c, n) * q(c, n - 1),
        ("0011", [0, 0, 1, 1]) => q(c - b, n) * q(c - 1, n - 1) + q(n - c, n) * q(c, n - 1),
        ("0011", [0, 0, 1, 2]) => q(n - d, n) * q(c, n - 1) * q(d - 1, n - 2) + q(d - c, n) * q(c, n - 1) * q(d - 2, n - 2) + q(c - b, n) * q(c - 1, n - 1) * q(d - 2, n - 2),
        ("0011", [0, 1, 0, 0]) => q(c - b, n) * q(c - a - 1, n - 1) + q(n - c, n) * q(c - a, n - 1),
        ("0011", [0, 1, 0, 1]) => q(b - a, n) * q(d - b, n - 1) + q(c - b, n) * q(d - b - 1, n - 1),
        ("0011", [0, 1, 0, 2]) => q(b - a, n) * (q(d - b, n - 1) * q(d - 2, n - 2) + q(n - d, n - 1) * q(d - 1, n - 2)) + q(c - b, n) * (q(d - b - 1, n - 1) * q(d - 2, n - 2) + q(n - d, n - 1) * q(d - 1, n - 2)),
        ("0011", [0, 1, 1, 0]) => q(c - b, n) * q(d - a - 1, n - 1),
        ("0011", [0, 1, 1, 1]) => q(c - b, n) * q(n - a - 1, n - 1),
        ("0011", [0, 1, 1, 2]) => q(n - d, n) * q(c - b, n - 1) * q(d - 1, n - 2) + q(d - c, n) * q(c - b, n - 1) * q(d - 2, n - 2) + q(c - b, n) * q(c - b - 1, n - 1) * q(d - 2, n - 2) + q(b - a, n) * q(c - b, n - 1) * q(d - 2, n - 2),
        ("0011", [0, 1, 2, 0]) => q(b - a, n) * (q(c - b, n - 1) * q(c - 2, n - 2) + q(n - c, n - 1) * q(c - 1, n - 2)) + q(c - b, n) * (q(c - b - 1, n - 1) * q(c - 2, n - 2) + q(n - c, n - 1) * q(c - 1, n - 2)) + q(d - c, n) * (q(c - b, n - 1) * q(c - 1, n - 2) + q(n - c - 1, n - 1) * q(c, n - 2)),
        ("0011", [0, 1, 2, 1]) => q(a, n) * q(d - b, n - 1) * q(n - a - 1, n - 2) + q(b - a, n) * q(d - b, n - 1) * q(n - a - 2, n - 2) + q(c - b, n) * q(d - b - 1, n - 1) * q(n - a - 2, n - 2),
        ("0011", [0, 1, 2, 2]) => q(a, n) * q(n - b, n - 1) * q(n - a - 1, n - 2) + q(b - a, n) * q(n - b, n - 1) * q(n - a - 2, n - 2) + q(c - b, n) * q(n - b - 1, n - 1) * q(n - a - 2, n - 2),
        ("0011", [0, 1, 2, 3]) => {
            q(c - b, n) * (q(c - a - 1, n - 1) * q(c - 2, n - 2) * q(d - 3, n - 3) + q(d - c, n - 1) * q(c - 1, n - 2) * q(d - 3, n - 3) + q(n - d, n - 1) * q(c - 1, n - 2) * q(d - 2, n - 3))
                + q(d - c, n) * (q(c - a, n - 1) * q(c - 1, n - 2) * q(d - 3, n - 3) + q(d - c - 1, n - 1) * q(c, n - 2) * q(d - 3, n - 3) + q(n - d, n - 1) * q(c, n - 2) * q(d - 2, n - 3))
                + q(n - d, n) * (q(c - a, n - 1) * q(c - 1, n - 2) * q(d - 2, n - 3) + q(d - c, n - 1) * q(c, n - 2) * q(d - 2, n - 3) + q(n - d - 1, n - 1) * q(c, n - 2) * q(d - 1, n - 3))
        }
        ("0101", [0, 0, 1, 0]) => q(b - a, n) * q(n - c, n - 1),
        ("0101", [0, 0, 1, 1]) => q(b - a, n) * q(d - c, n - 1),
        ("0101", [0, 0, 1, 2]) => q(b - a, n) * (q(n - d, n - 1) * q(d - 1, n - 2) + q(d - c, n - 1) * q(d - 2, n - 2)),
        ("0101", [0, 1, 0, 0]) => q(b, n) * q(d - c, n - 1),
        ("0101", [0, 1, 0, 1]) => q(b, n) * q(n - c, n - 1),
        ("0101", [0, 1, 0, 2]) => q(b, n) * (q(n - d, n - 1) * q(d - 1, n - 2) + q(d - c, n - 1) * q(d - 2, n - 2)),
        ("0101", [0, 1, 2, 0]) => q(b - a, n) * q(b - 1, n - 1) * q(n - c, n - 2) + q(c - b, n) * q(b, n - 1) * q(n - c, n - 2) + q(d - c, n) * q(b, n - 1) * q(n - c - 1, n - 2),
        ("0101", [0, 1, 2, 1]) => q(a, n) * q(n - c, n - 1) * q(n - a - 1, n - 2) + q(b - a, n) * q(n - c, n - 1) * q(n - a - 2, n - 2),
        ("0101", [0, 1, 2, 2]) => q(d - c, n) * (q(a, n - 1) * q(n - a - 1, n - 2) + q(b - a, n - 1) * q(n - a - 2, n - 2)),
        ("0101", [0, 1, 2, 3]) => {
            let early = q(n - d, n - 2) * q(d - 2, n - 3) + q(d - c, n - 2) * q(d - 3, n - 3);
            let mid = q(n - d, n - 2) * q(d - 2, n - 3) + q(d - c - 1, n - 2) * q(d - 3, n - 3);
            let late = q(n - d - 1, n - 2) * q(d - 1, n - 3) + q(d - c, n - 2) * q(d - 2, n - 3);
            q(b - a, n) * q(b - 1, n - 1) * early + q(c - b, n) * q(b, n - 1) * early + q(d - c, n) * q(b, n - 1) * mid + q(n - d, n) * q(b, n - 1) * late
        }
        ("0110", [0, 0, 0, 1]) => q(b - a, n) * q(n - d, n - 1),
        ("0110", [0, 0, 1, 2]) => q(b - a, n) * q(c - 1, n - 1) * q(n - d, n - 2),
        ("0110", [0, 1, 0, 2]) => q(b - a, n) * q(b - 1, n - 1) * q(n - d, n - 2) + q(c - b, n) * q(b, n - 1) * q(n - d, n - 2),
        ("0110", [0, 1, 1, 0]) => q(b, n) * q(n - d, n - 1),
        ("0110", [0, 1, 1, 2]) => q(n - d, n) * (q(b - a, n - 1) * q(b - 1, n - 2) + q(n - b - 1, n - 1) * q(b, n - 2)),
        ("0110", [0, 1, 2, 0]) => q(b, n) * q(c - 1, n - 1) * q(n - d, n - 2),
        ("0110", [0, 1, 2, 3]) => q(n - d, n) * (q(b - a, n - 1) * q(b - 1, n - 2) * q(c - 2, n - 3) + q(c - b, n - 1) * q(b, n - 2) * q(c - 2, n - 3) + q(n - c - 1, n - 1) * q(b, n - 2) * q(c - 1, n - 3)),
        ("1001", [0, 1, 1, 0]) => q(a, n) * q(n - c, n - 1),
        ("1001", [0, 1, 1, 1]) => q(a, n) * q(d - c, n - 1),
        ("1001", [0, 1, 1, 2]) => q(a, n) * (q(n - d, n - 1) * q(d - 1, n - 2) + q(d - c, n - 1) * q(d - 2, n - 2)),
        ("1001", [0, 1, 2, 0]) => q(a, n) * q(n - c, n - 1) * q(n - b - 1, n - 2),
        ("1001", [0, 1, 2, 1]) => q(a, n) * (q(n - d, n - 1) * q(d - b, n - 2) + q(d - c, n - 1) * q(d - b - 1, n - 2)),
        ("1001", [0, 1, 2, 2]) => q(a, n) * q(d - c, n - 1) * q(n - b - 1, n - 2),
        ("1001", [0, 1, 2, 3]) => q(a, n) * (q(n - d, n - 1) * (q(n - d - 1, n - 2) * q(d - 1, n - 3) + q(d - b, n - 2) * q(d - 2, n - 3)) + q(d - c, n - 1) * (q(d - b - 1, n - 2) * q(d - 3, n - 3) + q(n - d, n - 2) * q(d - 2, n - 3))),
        ("1010", [0, 1, 0, 1]) => q(a, n) * q(n - d, n - 1),
        ("1010", [0, 1, 0, 2]) => q(a, n) * q(n - d, n - 1) * q(n - b - 1, n - 2),
        ("1010", [0, 1, 1, 2]) => q(a, n) * q(c - b, n - 1) * q(n - d, n - 2),
        ("1010", [0, 1, 2, 1]) => q(a, n) * q(c - 1, n - 1) * q(n - d, n - 2),
        ("1010", [0, 1, 2, 3]) => q(a, n) * q(n - d, n - 1) * (q(n - d - 1, n - 2) * q(c - 1, n - 3) + q(d - c, n - 2) * q(c - 1, n - 3) + q(c - b, n - 2) * q(c - 2, n - 3)),
        ("1100", [0, 0, 1, 1]) => q(a, n) * q(n - d, n - 1),
        ("1100", [0, 0, 1, 2]) => q(a, n) * q(n - d, n - 1) * q(n - c - 1, n - 2),
        ("1100", [0, 1, 2, 2]) => q(a, n) * q(b - 1, n - 1) * q(n - d, n - 2),
        ("1100", [0, 1, 2, 3]) => q(a, n) * q(b - 1, n - 1) * q(n - d, n - 2) * q(n - c - 1, n - 3),
        ("1111", [0, 0, 0, 0]) => q(a, n),
        ("1111", [0, 0, 0, 1]) => q(a, n) * q(d - 1, n - 1),
        ("1111", [0, 0, 1, 0]) => q(a, n) * q(c - 1, n - 1),
        ("1111", [0, 0, 1, 1]) => q(a, n) * q(c - 1, n - 1),
        ("1111", [0, 0, 1, 2]) => q(a, n) * q(c - 1, n - 1) * q(d - 2, n - 2),
        ("1111", [0, 1, 0, 0]) => q(a, n) * q(b - 1, n - 1),
        ("1111", [0, 1, 0, 1]) => q(a, n) * q(b - 1, n - 1),
        ("1111", [0, 1, 0, 2]) => q(a, n) * q(b - 1, n - 1) * q(d - 2, n - 2),
        ("1111", [0, 1, 1, 0]) => q(a, n) * q(b - 1, n - 1),
        ("1111", [0, 1, 1, 1]) => q(a, n) * q(b - 1, n - 1),
        ("1111", [0, 1, 1, 2]) => q(a, n) * q(b - 1, n - 1) * q(d - 2, n - 2),
        ("1111", [0, 1, 2, 0]) => q(a, n) * q(b - 1, n - 1) * q(c - 2, n - 2),
        ("1111", [0, 1, 2, 1]) => q(a, n) * q(b - 1, n - 1) * q(c - 2, n - 2),
        ("1111", [0, 1, 2, 2]) => q(a, n) * q(b - 1, n - 1) * q(c - 2, n - 2),
        ("1111", [0, 1, 2, 3]) => q(a, n) * q(b - 1, n - 1) * q(c - 2, n - 2) * q(d - 3, n - 3),
        ("010", [0, 0, 0])
        | ("010", [0, 1, 1])
        | ("100", [0, 0, 0])
        | ("100", [0, 0, 1])
        | ("100", [0, 1, 0])
        | ("101", [0, 0, 0])
        | ("101", [0, 0, 1])
        | ("110", [0, 0, 0])
        | ("110", [0, 1, 0])
        | ("110", [0, 1, 1])
        | ("0101", [0, 0, 0, 0])
        | ("0101", [0, 0, 0, 1])
        | ("0101", [0, 1, 1, 0])
        | ("0101", [0, 1, 1, 1])
        | ("0101", [0, 1, 1, 2])
        | ("0110", [0, 0, 0, 0])
        | ("0110", [0, 0, 1, 0])
        | ("0110", [0, 0, 1, 1])
        | ("0110", [0, 1, 0, 0])
        | ("0110", [0, 1, 0, 1])
        | ("0110", [0, 1, 1, 1])
        | ("0110", [0, 1, 2, 1])
        | ("0110", [0, 1, 2, 2])
        | ("1001", [0, 0, 0, 0])
        | ("1001", [0, 0, 0, 1])
        | ("1001", [0, 0, 1, 0])
        | ("1001", [0, 0, 1, 1])
        | ("1001", [0, 0, 1, 2])
        | ("1001", [0, 1, 0, 0])
        | ("1001", [0, 1, 0, 1])
        | ("1001", [0, 1, 0, 2])
        | ("1010", [0, 0, 0, 0])
        | ("1010", [0, 0, 0, 1])
        | ("1010", [0, 0, 1, 0])
        | ("1010", [0, 0, 1, 1])
        | ("1010", [0, 0, 1, 2])
        | ("1010", [0, 1, 0, 0])
        | ("1010", [0, 1, 1, 0])
        | ("1010", [0, 1, 1, 1])
        | ("1010", [0, 1, 2, 0])
        | ("1010", [0, 1, 2, 2])
        | ("1100", [0, 0, 0, 0])
        | ("1100", [0, 0, 0, 1])
        | ("1100", [0, 0, 1, 0])
        | ("1100", [0, 1, 0, 0])
        | ("1100", [0, 1, 0, 1])
        | ("1100", [0, 1, 0, 2])
        | ("1100", [0, 1, 1, 0])
        | ("1100", [0, 1, 1, 1])
        | ("1100", [0, 1, 1, 2])
        | ("1100", [0, 1, 2, 0])
        | ("1100", [0, 1, 2, 1]) => zero,
        _ => return None,
    };
    Some(p)
}

/// Order-2 probabilities for every pair of rollout periods, split by whether the two
/// cells share a cluster. Entry `[j-1][k-1]` concerns cells at periods `j` then `k`.
#[derive(Debug, Clone)]
pub struct PairProbabilities {
    rollout: usize,
    treated: Vec<Probability>,
    // index 0: distinct clusters, 1: same cluster
    both_treated: [Vec<Probability>; 2],
    both_control: [Vec<Probability>; 2],
    treated_control: [Vec<Probability>; 2],
}

impl PairProbabilities {
    pub(super) fn new(design: &StepWedgeDesign) -> Self {
        let rollout = design.num_rollout_periods();
        let treated = (1..=rollout).map(|j| design.propensity(j).expect("rollout period")).collect();
        let table = |same: bool, first: Arm, second: Arm| -> Vec<Probability> {
            let other = if same { 0 } else { 1 };
            let mut out = Vec::with_capacity(rollout * rollout);
            for j in 1..=rollout {
                for k in 1..=rollout {
                    let spec = JointProbabilitySpec::new(vec![
                        CellQuery::new(0, j, first),
                        CellQuery::new(other, k, second),
                    ])
                    .expect("two entries");
                    out.push(design.joint_probability(&spec).expect("order-2 forms are complete"));
                }
            }
            out
        };
        use Arm::{Control, Treated};
        PairProbabilities {
            rollout,
            treated,
            both_treated: [table(false, Treated, Treated), table(true, Treated, Treated)],
            both_control: [table(false, Control, Control), table(true, Control, Control)],
            treated_control: [table(false, Treated, Control), table(true, Treated, Control)],
        }
    }

    pub fn num_rollout_periods(&self) -> usize {
        self.rollout
    }

    pub fn propensity(&self, period: usize) -> Probability {
        self.treated[period - 1]
    }

    fn index(&self, j: usize, k: usize) -> usize {
        (j - 1) * self.rollout + (k - 1)
    }

    /// `e¹¹`: both cells treated.
    pub fn both_treated(&self, same_cluster: bool, j: usize, k: usize) -> Probability {
        self.both_treated[same_cluster as usize][self.index(j, k)]
    }

    /// `e⁰⁰`: both cells on control.
    pub fn both_control(&self, same_cluster: bool, j: usize, k: usize) -> Probability {
        self.both_control[same_cluster as usize][self.index(j, k)]
    }

    /// `e¹⁰`: first cell (period `j`) treated, second (period `k`) on control.
    pub fn treated_control(&self, same_cluster: bool, j: usize, k: usize) -> Probability {
        self.treated_control[same_cluster as usize][self.index(j, k)]
    }
}
