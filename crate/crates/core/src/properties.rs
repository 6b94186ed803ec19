//! Property tests over the public API.

use proptest::prelude::*;

use crate::bounds::{degenerate_bound, nondegenerate_bound};
use crate::mixing::beta_via_conditionals;
use crate::sparsity::{is_m_free, tau_bound_table};
use crate::spec_test::compute_statistic;
use crate::ustat::{evaluate_par, PolynomialKernel};
use crate::*;

fn lattice_points(dim: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::btree_set(prop::collection::vec(-4i64..=4, dim), 2..=max_len)
        .prop_map(|set| set.into_iter().collect())
}

fn space_and_vector(q: usize) -> impl Strategy<Value = (IndexSpace, Vec<usize>)> {
    (1usize..=2)
        .prop_flat_map(|d| lattice_points(d, 9))
        .prop_flat_map(move |coords| {
            let n = coords.len();
            (Just(coords), prop::collection::vec(0..n, q))
        })
        .prop_map(|(coords, entries)| (IndexSpace::lattice(coords).unwrap(), entries))
}

fn joint_table() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), r).prop_filter_map(
            "all-zero table",
            |mut rows| {
                let total: f64 = rows.iter().flatten().sum();
                if total < 1e-3 {
                    return None;
                }
                rows.iter_mut().flatten().for_each(|p| *p /= total);
                Some(rows)
            },
        )
    })
}

fn design(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (6usize..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_are_symmetric_metrics(coords in lattice_points(2, 12)) {
        let space = IndexSpace::lattice(coords).unwrap();
        let n = space.len();
        for i in 0..n {
            prop_assert_eq!(space.distance(i, i).unwrap(), Distance::ZERO);
            prop_assert!(space.neighborhood(i, 0.0).unwrap().contains(&i));
            for j in 0..n {
                let dij = space.distance(i, j).unwrap();
                prop_assert_eq!(dij, space.distance(j, i).unwrap());
                for k in 0..n {
                    let via = space.distance(i, k).unwrap().to_f64() + space.distance(k, j).unwrap().to_f64();
                    prop_assert!(dij.to_f64() <= via);
                }
            }
        }
    }

    #[test]
    fn profile_ignores_entry_order((space, entries) in space_and_vector(4), m in 0.0f64..4.0, rot in 0usize..4) {
        let ivec = IndexVector::new(&space, entries.clone()).unwrap();
        let mut rotated = entries.clone();
        rotated.rotate_left(rot);
        rotated.swap(0, 3);
        let other = IndexVector::new(&space, rotated).unwrap();
        prop_assert_eq!(m_profile(&space, &ivec, m).profile, m_profile(&space, &other, m).profile);
    }

    #[test]
    fn larger_radius_never_adds_classes((space, entries) in space_and_vector(4), m in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let ivec = IndexVector::new(&space, entries).unwrap();
        let fine = m_profile(&space, &ivec, m).profile.classes();
        let coarse = m_profile(&space, &ivec, m + extra).profile.classes();
        prop_assert!(coarse <= fine);
    }

    #[test]
    fn free_position_is_a_singleton_class((space, entries) in space_and_vector(4), m in 0.0f64..3.0, k in 0usize..4) {
        let ivec = IndexVector::new(&space, entries.clone()).unwrap();
        let result = m_profile(&space, &ivec, m);
        let singleton = result.classes.iter().any(|c| c == &vec![entries[k]])
            && entries.iter().filter(|&&e| e == entries[k]).count() == 1;
        prop_assert_eq!(is_m_free(&space, &ivec, k, m).unwrap(), singleton);
    }

    #[test]
    fn exact_counts_partition_and_sit_below_the_bound((space, _) in space_and_vector(1), q in 1usize..=3, m in 0.0f64..3.0) {
        let exact = tau_exact(&space, q, m).unwrap();
        let n = space.len() as f64;
        prop_assert_eq!(exact.total(), n.powi(q as i32));
        let bound = tau_bound_table(&space, q, m).unwrap();
        for (profile, count) in &exact.entries {
            prop_assert!(*count <= bound.get(profile) * (1.0 + 1e-12), "{} {} {}", profile, count, bound.get(profile));
        }
    }

    #[test]
    fn beta_agrees_with_conditional_form(rows in joint_table()) {
        let joint = DiscreteJoint::new(rows).unwrap();
        let beta = beta_discrete(&joint);
        prop_assert!((0.0..=1.0).contains(&beta));
        prop_assert!((beta - beta_via_conditionals(&joint)).abs() < 1e-12);
    }

    #[test]
    fn beta_ignores_relabeling(rows in joint_table(), shift in 0usize..4) {
        let beta = beta_discrete(&DiscreteJoint::new(rows.clone()).unwrap());
        let mut relabeled = rows;
        let len = relabeled.len();
        relabeled.rotate_left(shift % len);
        for row in &mut relabeled {
            row.reverse();
        }
        let other = beta_discrete(&DiscreteJoint::new(relabeled).unwrap());
        prop_assert!((beta - other).abs() < 1e-12);
    }

    #[test]
    fn geometric_beta_is_non_increasing(rate in 0.01f64..0.99, scale in 0.1f64..10.0, m in 0.0f64..20.0, step in 0.0f64..5.0) {
        let model = MixingModel::geometric(rate, scale).unwrap();
        let near = model.beta(GroupSize::Finite(1), GroupSize::Infinite, m).unwrap();
        let far = model.beta(GroupSize::Finite(1), GroupSize::Infinite, m + step).unwrap();
        prop_assert!(far <= near);
    }

    #[test]
    fn parallel_and_serial_sums_agree((x, _) in design(80), coef in prop::array::uniform6(-2.0f64..2.0)) {
        let sample = Sample::univariate(&x).unwrap();
        let kernel = PolynomialKernel {
            coef,
            first_moments: vec![0.0; x.len()],
            second_moments: vec![3.0; x.len()],
        };
        let serial = evaluate(&kernel, &sample);
        prop_assert_eq!(serial, evaluate_par(&kernel, &sample));
        let parts = hoeffding_decompose(&kernel, &sample).unwrap();
        prop_assert!(close(parts.total(), serial.sum, 1e-9), "{} vs {}", parts.total(), serial.sum);
    }

    #[test]
    fn statistic_ignores_scale_and_order((u, z) in design(60), scale in 0.1f64..10.0) {
        let config = SpecTestConfig::default();
        let base = compute_statistic(&u, &z, 1, &config).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| v * scale).collect();
        let rescaled = compute_statistic(&scaled, &z, 1, &config).unwrap();
        prop_assert!(close(base.t_n, rescaled.t_n, 1e-9));
        let (mut ur, mut zr) = (u.clone(), z.clone());
        ur.reverse();
        zr.reverse();
        let reversed = compute_statistic(&ur, &zr, 1, &config).unwrap();
        prop_assert!(close(base.t_n, reversed.t_n, 1e-9));
    }

    #[test]
    fn test_ignores_the_null_mean((u, z) in design(60), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let config = SpecTestConfig::default();
        let y0 = RegressionData::univariate(u.clone(), z.clone()).unwrap();
        let shifted: Vec<f64> = u.iter().zip(&z).map(|(u, z)| u + a + b * z).collect();
        let y1 = RegressionData::univariate(shifted, z).unwrap();
        let (r0, r1) = (run_test(&y0, &config).unwrap(), run_test(&y1, &config).unwrap());
        prop_assert!(close(r0.t_n, r1.t_n, 1e-6), "{} vs {}", r0.t_n, r1.t_n);
    }

    #[test]
    fn wasserstein_is_permutation_invariant_and_lipschitz(mut xs in prop::collection::vec(-4.0f64..4.0, 2..200), k in 0usize..200, bump in -1.0f64..1.0) {
        let base = wasserstein1_to_normal(&xs).unwrap();
        let n = xs.len();
        let mut reversed = xs.clone();
        reversed.reverse();
        prop_assert!((base - wasserstein1_to_normal(&reversed).unwrap()).abs() < 1e-12);
        xs[k % n] += bump;
        let moved = wasserstein1_to_normal(&xs).unwrap();
        prop_assert!((base - moved).abs() <= bump.abs() / n as f64 + 1e-12);
    }

    #[test]
    fn bound_totals_are_weighted_sums(n in 50.0f64..5000.0, nu in 1.0f64..100.0, h in 0.1f64..5.0, constant in 0.1f64..10.0) {
        let mut ing = BoundIngredients::new(n, 2.0, 1.0, MixingModel::geometric(0.5, 1.0).unwrap());
        ing.nu = Some(nu);
        ing.s = Some(nu);
        ing.h_tilde2 = Some(h);
        ing.gamma_m2 = Some(h);
        ing.constant = constant;
        for key in ["2", "3", "4", "1+delta", "2+delta", "4+delta"] {
            ing.set_h(key, h);
        }
        ing.tau = TauInputs::from_eta(n as usize, 5, 20);
        ing.eta = EtaInputs { m: Some(5.0), m4: Some(20.0) };
        for report in [
            nondegenerate_bound(&ing).unwrap(),
            degenerate_bound(&ing, false).unwrap(),
            degenerate_bound(&ing, true).unwrap(),
        ] {
            let sum: f64 = report.terms.iter().map(|t| t.weight * t.value).sum();
            prop_assert!(close(report.total, sum, 1e-12));
            let mut unit = ing.clone();
            unit.constant = 1.0;
            let base = match report.terms.len() {
                5 if report.terms[0].name == "A0" => degenerate_bound(&unit, true),
                5 => nondegenerate_bound(&unit),
                _ => degenerate_bound(&unit, false),
            }
            .unwrap();
            prop_assert!(close(report.total, constant * base.total, 1e-12));
        }
    }
}
