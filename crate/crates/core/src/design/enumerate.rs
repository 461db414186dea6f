use super::{AssignmentRealization, StepWedgeDesign};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Every distinct assignment of a design exactly once, in lexicographic order of the
/// adoption-time vector. Each one has probability `1 / count()`.
pub struct Assignments<'a> {
    design: &'a StepWedgeDesign,
    next: Option<Vec<usize>>,
    count: u128,
}

impl<'a> Assignments<'a> {
    pub(super) fn new(design: &'a StepWedgeDesign, cap: u128) -> Result<Self> {
        let count = match design.assignment_count() {
            Some(c) if c <= cap => c,
            Some(c) => return Err(Error::TooLargeToEnumerate { count: c.to_string(), cap }),
            None => {
                return Err(Error::TooLargeToEnumerate {
                    count: format!("about 10^{:.1}", design.log10_assignment_count()),
                    cap,
                })
            }
        };
        Ok(Assignments { design, next: Some(design.cohort_labels()), count })
    }

    pub fn total(&self) -> u128 {
        self.count
    }

    pub fn design(&self) -> &StepWedgeDesign {
        self.design
    }
}

impl Iterator for Assignments<'_> {
    type Item = AssignmentRealization;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.next.take()?;
        let mut successor = current.clone();
        if next_permutation(&mut successor) {
            self.next = Some(successor);
        }
        Some(AssignmentRealization::from_raw(current))
    }
}

/// Advances to the next lexicographic permutation of a multiset; false once exhausted.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn counts_match_multinomial() {
        for (i, cum, expected) in [(3, vec![1, 2], 6), (4, vec![2, 2], 6), (5, vec![1, 3], 30), (6, vec![2, 4], 90)] {
            let d = StepWedgeDesign::new(i, cum).unwrap();
            let all: Vec<_> = d.enumerate_assignments(DEFAULT_ENUMERATION_CAP).unwrap().collect();
            assert_eq!(all.len(), expected);
            let distinct: HashSet<_> = all.iter().cloned().collect();
            assert_eq!(distinct.len(), expected);
            for a in &all {
                assert!(AssignmentRealization::new(&d, a.adoption_times().to_vec()).is_ok());
            }
        }
    }

    #[test]
    fn cap_is_enforced_with_count_in_message() {
        let d = StepWedgeDesign::one_at_a_time(10).unwrap();
        let err = d.enumerate_assignments(DEFAULT_ENUMERATION_CAP).err().unwrap();
        assert!(err.to_string().contains("39916800"));
        let huge = StepWedgeDesign::new(90, vec![15, 30, 45, 60, 75]).unwrap();
        assert!(huge.enumerate_assignments(DEFAULT_ENUMERATION_CAP).err().unwrap().to_string().contains("10^"));
    }
}
