mod common;

use proptest::prelude::*;
use swedge_core::data::{Record, TrialDataset};
use swedge_core::diagnostics::balance_table;
use swedge_core::ht::{HtFit, HtSpec, HtVariance, PairTables};
use swedge_core::inference::Reference;
use swedge_core::method::{Estimator, Method, VarianceKind};
use swedge_core::{Error, StepWedgeDesign};

fn designs() -> Vec<StepWedgeDesign> {
    vec![
        StepWedgeDesign::new(8, vec![2, 4, 6]).unwrap(),
        StepWedgeDesign::one_at_a_time(6).unwrap(),
        StepWedgeDesign::new(12, vec![3, 6, 9, 11]).unwrap(),
    ]
}

fn all_methods() -> Vec<Method> {
    let mut out = Vec::new();
    for e in Estimator::ALL {
        for v in VarianceKind::ALL {
            for r in [Reference::T, Reference::Gaussian] {
                if let Ok(m) = Method::new(e, v, r) {
                    out.push(m);
                }
            }
        }
    }
    out
}

fn rebuild(data: &TrialDataset, label: impl Fn(i64) -> i64, y: impl Fn(usize) -> f64) -> TrialDataset {
    let records = (0..data.len())
        .map(|k| Record {
            cluster: label(data.cluster_labels()[data.cluster(k)]),
            period: data.period(k),
            z: data.z(k),
            d: data.d(k),
            y: y(k),
            x: data.x(k).to_vec(),
        })
        .collect();
    TrialDataset::new(data.design().clone(), data.covariate_names().to_vec(), records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_is_the_set_of_unrejected_values(
        seed in any::<u64>(), which in 0usize..3, p in 0usize..3, effect in -1.0f64..1.0,
        lambda in -4.0f64..4.0, alpha in prop::sample::select(vec![0.01, 0.05, 0.1]),
    ) {
        let design = &designs()[which];
        let data = common::random_trial(design, seed, p, effect);
        let tables = PairTables::new(design);
        for m in all_methods() {
            let Ok(stat) = m.statistic(&data, &tables) else { continue };
            let set = stat.interval(alpha).unwrap();
            let t = match stat.test(lambda) {
                Ok(t) => t,
                Err(Error::NegativeVariance { .. }) => {
                    prop_assert!(!set.contains(lambda), "{} at {}", m, lambda);
                    continue;
                }
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let crit = stat.critical_value(alpha).unwrap();
            // skip values that sit on the boundary to rounding
            if t.deviate.is_some_and(|d| (d.abs() - crit).abs() < 1e-7 * crit) {
                continue;
            }
            prop_assert_eq!(set.contains(lambda), !stat.rejects(lambda, alpha).unwrap(), "{} at {}", m, lambda);
        }
    }

    #[test]
    fn itt_test_agrees_with_the_statistic_at_zero(seed in any::<u64>(), which in 0usize..3, p in 0usize..3) {
        let design = &designs()[which];
        let data = common::random_trial(design, seed, p, 0.4);
        let tables = PairTables::new(design);
        for m in all_methods() {
            let Ok(stat) = m.statistic(&data, &tables) else { continue };
            let (full, itt) = match (stat.test(0.0), m.itt_test(&data, &tables)) {
                (Ok(full), Ok(itt)) => (full, itt),
                (Err(Error::NegativeVariance { .. }), Err(Error::NegativeVariance { .. })) => continue,
                (full, itt) => return Err(TestCaseError::fail(format!("{m}: {full:?} vs {itt:?}"))),
            };
            let scale = 1.0 + full.tau_hat.abs();
            prop_assert!((itt.tau_hat - full.tau_hat).abs() < 1e-10 * scale, "{m}");
            prop_assert!((itt.se - full.se).abs() < 1e-10 * (1.0 + full.se), "{m}");
            prop_assert!((itt.p_value - full.p_value).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn ht_estimate_is_affine_in_lambda(seed in any::<u64>(), which in 0usize..3, l1 in -3.0f64..3.0, l2 in -3.0f64..3.0, w in 0.0f64..1.0) {
        let design = &designs()[which];
        let data = common::random_trial(design, seed, 1, -0.3);
        let tables = PairTables::new(design);
        for e in [Estimator::Ht, Estimator::HtAdjPrepost, Estimator::HtAdjFull] {
            let spec = HtSpec { adjustment: match e {
                Estimator::HtAdjPrepost => Some(swedge_core::ht::AdjustmentMode::PrePostRollout),
                Estimator::HtAdjFull => Some(swedge_core::ht::AdjustmentMode::FullData),
                _ => None,
            }, variance: HtVariance::Conservative };
            let Ok(fit) = HtFit::fit(&data, &tables, &spec) else { continue };
            let mid = w * l1 + (1.0 - w) * l2;
            let blend = w * fit.estimate(l1) + (1.0 - w) * fit.estimate(l2);
            prop_assert!((fit.estimate(mid) - blend).abs() < 1e-9 * (1.0 + blend.abs()));
            let (a, b) = fit.affine_coefficients();
            prop_assert!((fit.estimate(l1) - (a - l1 * b)).abs() < 1e-9 * (1.0 + a.abs() + (l1 * b).abs()));
            for kind in [HtVariance::Conservative, HtVariance::Simplified] {
                let (q0, q1, q2) = fit.variance_coefficients(kind);
                let v = fit.variance(l1, kind);
                prop_assert!((v - (q0 + q1 * l1 + q2 * l1 * l1)).abs() < 1e-9 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>(), which in 0usize..3, p in 0usize..4) {
        let data = common::random_trial(&designs()[which], seed, p, 0.25);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = TrialDataset::read_csv(buf.as_slice(), data.design().clone()).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn estimates_ignore_cluster_labels(seed in any::<u64>(), which in 0usize..3, offset in -1000i64..1000) {
        let design = &designs()[which];
        let data = common::random_trial(design, seed, 1, 0.5);
        let shifted = rebuild(&data, |c| c * 3 + offset, |k| data.y(k));
        let tables = PairTables::new(design);
        for m in all_methods() {
            let (Ok(a), Ok(b)) = (m.statistic(&data, &tables), m.statistic(&shifted, &tables)) else { continue };
            prop_assert_eq!(a.intercept, b.intercept, "{}", m);
            prop_assert_eq!(a.slope, b.slope, "{}", m);
        }
    }

    #[test]
    fn regression_estimates_ignore_outcome_location(seed in any::<u64>(), which in 0usize..3, shift in -50.0f64..50.0) {
        let design = &designs()[which];
        let data = common::random_trial(design, seed, 2, 0.5);
        let moved = rebuild(&data, |c| c, |k| data.y(k) + shift);
        let tables = PairTables::new(design);
        for e in [Estimator::Unadjusted, Estimator::Ancova1, Estimator::Ancova3] {
            let m = Method::new(e, VarianceKind::Cr3, Reference::T).unwrap();
            // leave-one-cluster-out fits can be singular on small designs
            let (Ok(a), Ok(b)) = (m.statistic(&data, &tables), m.statistic(&moved, &tables)) else { continue };
            prop_assert!((a.intercept - b.intercept).abs() < 1e-8 * (1.0 + shift.abs()), "{m}");
            prop_assert!((a.variance_at(0.3) - b.variance_at(0.3)).abs() < 1e-8 * (1.0 + a.variance_at(0.3)), "{m}");
        }
    }

    #[test]
    fn standardized_differences_are_nonnegative(seed in any::<u64>(), which in 0usize..3, p in 1usize..4) {
        let data = common::random_trial(&designs()[which], seed, p, 0.0);
        let rows = balance_table(&data, &[]).unwrap();
        prop_assert_eq!(rows.len(), p);
        for r in rows {
            prop_assert!(r.smd >= 0.0);
            prop_assert!(r.sd_treated >= 0.0 && r.sd_control >= 0.0);
        }
    }
}
