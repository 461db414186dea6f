mod common;

use common::oracles::{check_joint_probabilities, CellMasks};
use common::{brute_force_adoptions, small_designs};
use proptest::prelude::*;
use swedge_core::design::{Arm, CellQuery, JointProbabilitySpec};
use swedge_core::StepWedgeDesign;

#[test]
fn closed_forms_match_enumeration_for_small_designs() {
    let check = check_joint_probabilities(5, 4);
    assert_eq!(check.mismatches, 0, "{check:?}");
    assert!(check.compared > 1_000_000, "{check:?}");
}

#[test]
fn assignment_counts_match_brute_force() {
    for d in small_designs(6, 4) {
        let brute = brute_force_adoptions(&d);
        assert_eq!(d.assignment_count(), Some(brute.len() as u128));
        let listed: Vec<Vec<usize>> = d.enumerate_assignments(1 << 20).unwrap().map(|a| a.adoption_times().to_vec()).collect();
        let mut sorted = listed.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), brute.len());
    }
}

#[test]
fn enumerated_patterns_agree_with_masks() {
    // three arms alike over four cells: the library enumerates these itself
    let d = StepWedgeDesign::new(5, vec![1, 2, 4]).unwrap();
    let masks = CellMasks::new(&d);
    let cells = vec![
        CellQuery::new(0, 1, Arm::Treated),
        CellQuery::new(1, 2, Arm::Treated),
        CellQuery::new(2, 3, Arm::Treated),
        CellQuery::new(3, 3, Arm::Control),
    ];
    let spec = JointProbabilitySpec::new(cells.clone()).unwrap();
    assert_eq!(d.joint_probability(&spec).unwrap().exact(), masks.frequency(&cells));
}

#[test]
fn sampled_assignments_are_uniform() {
    let d = StepWedgeDesign::new(4, vec![1, 3]).unwrap();
    let all = brute_force_adoptions(&d);
    let mut counts = vec![0usize; all.len()];
    let draws = 24_000;
    for seed in 0..draws {
        let a = d.sample_assignment(seed);
        counts[all.iter().position(|v| v == a.adoption_times()).unwrap()] += 1;
    }
    let expected = draws as f64 / all.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 11 degrees of freedom; the 0.999 quantile is about 31.3
    assert!(chi2 < 31.3, "chi2 = {chi2}");
}

fn cell() -> impl Strategy<Value = (usize, usize, bool)> {
    (0usize..5, 1usize..=3, any::<bool>())
}

proptest! {
    #[test]
    fn relabeling_clusters_leaves_probabilities_unchanged(
        cells in prop::collection::vec(cell(), 2..=4),
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let d = StepWedgeDesign::new(5, vec![1, 3, 4]).unwrap();
        let q: Vec<CellQuery> = cells.iter().map(|&(c, p, t)| CellQuery::new(c, p, Arm::from_z(t))).collect();
        let r: Vec<CellQuery> = cells.iter().map(|&(c, p, t)| CellQuery::new(perm[c], p, Arm::from_z(t))).collect();
        let a = d.joint_probability(&JointProbabilitySpec::new(q.clone()).unwrap()).unwrap();
        let b = d.joint_probability(&JointProbabilitySpec::new(r).unwrap()).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.exact(), CellMasks::new(&d).frequency(&q));
    }

    #[test]
    fn arm_complements_sum_to_the_lower_order(cells in prop::collection::vec(cell(), 2..=3), extra in cell()) {
        let d = StepWedgeDesign::new(5, vec![2, 2, 4]).unwrap();
        let base: Vec<CellQuery> = cells.iter().map(|&(c, p, t)| CellQuery::new(c, p, Arm::from_z(t))).collect();
        let with = |arm| {
            let mut v = base.clone();
            v.push(CellQuery::new(extra.0, extra.1, arm));
            d.joint_probability(&JointProbabilitySpec::new(v).unwrap()).unwrap().exact()
        };
        let lower = d.joint_probability(&JointProbabilitySpec::new(base.clone()).unwrap()).unwrap().exact();
        prop_assert_eq!(with(Arm::Treated) + with(Arm::Control), lower);
    }
}
