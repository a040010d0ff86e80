mod common;

use common::{dense_oracle, lattice_dataset, max_rel_diff};
use gwle::{
    fit_local, fit_surface, mlwe_fit_local, predict, BandwidthMatrix, ConditionFlag, Error, FitConfig, KernelSpec,
    ScaleMatrix,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat(fit: &gwle::LocalFit) -> Vec<f64> {
    let mut v = fit.beta_hat.clone();
    v.extend(fit.gradient_hat.iter().flatten());
    v
}

#[test]
fn affine_truth_is_reproduced_exactly() {
    let ds = lattice_dataset(20, 20, 2, 1.0, 7, |u, x| {
        (1.0 + 2.0 * u[0] - 0.5 * u[1]) * x[0] + (-0.3 + u[0] + 4.0 * u[1]) * x[1]
    });
    let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::new(vec![1.5, 0.7]).unwrap(), 0.15).unwrap();
    for u0 in [[0.3, 0.3], [0.5, 0.7], [0.8, 0.2]] {
        let fit = fit_local(&ds, &u0, &cfg).unwrap();
        let b1 = 1.0 + 2.0 * u0[0] - 0.5 * u0[1];
        let b2 = -0.3 + u0[0] + 4.0 * u0[1];
        assert!((fit.beta_hat[0] - b1).abs() < 1e-9);
        assert!((fit.beta_hat[1] - b2).abs() < 1e-9);
        let grad = [[2.0, 1.0], [-0.5, 4.0]];
        for (got, want) in fit.gradient_hat.iter().flatten().zip(grad.iter().flatten()) {
            assert!((got - want).abs() < 1e-7, "{:?}", fit.gradient_hat);
        }
        assert_eq!(fit.condition_flag, ConditionFlag::WellPosed);
    }
}

#[test]
fn matches_direct_weighted_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let p = 1 + case % 3;
        let ds = lattice_dataset(12, 12, p, 1.0, case as u64, |u, x| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * ((k + 1) as f64 * u[0]).sin() + v * u[1] * u[1])
                .sum()
        });
        let scales = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
        let h = rng.random_range(0.15..0.6);
        let u0 = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
        let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::new(scales.clone()).unwrap(), h).unwrap();
        let fit = fit_local(&ds, &u0, &cfg).unwrap();
        let oracle = dense_oracle(&ds, &u0, &scales, h);
        worst = worst.max(max_rel_diff(&flat(&fit), oracle.as_slice()));
    }
    assert!(worst <= 1e-10, "worst relative difference {worst:e}");
}

#[test]
fn joint_scale_and_bandwidth_invariance() {
    let ds = lattice_dataset(15, 15, 2, 1.0, 3, |u, x| {
        (u[0] * u[1]).exp() * x[0] + (3.0 * u[0]).cos() * x[1]
    });
    let base = ScaleMatrix::new(vec![1.2, 0.8]).unwrap();
    let h = 0.2;
    let fit = fit_local(
        &ds,
        &[0.4, 0.6],
        &FitConfig::new(KernelSpec::gaussian(), base.clone(), h).unwrap(),
    )
    .unwrap();
    for c in [0.1, 3.0, 10.0] {
        let cfg = FitConfig::new(KernelSpec::gaussian(), base.scaled(c).unwrap(), c * h).unwrap();
        let other = fit_local(&ds, &[0.4, 0.6], &cfg).unwrap();
        assert!(max_rel_diff(&flat(&fit), &flat(&other)) <= 1e-12, "c = {c}");
    }
}

#[test]
fn huge_bandwidth_is_global_least_squares() {
    let ds = lattice_dataset(8, 9, 2, 1.0, 5, |u, x| {
        u[0] * x[0] - u[1] * u[1] * x[1] + 0.1 * (u[0] * 40.0).sin()
    });
    let u0 = [0.45, 0.55];
    let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), 1e6).unwrap();
    let fit = fit_local(&ds, &u0, &cfg).unwrap();
    // With all weights equal the oracle reduces to ordinary least squares.
    let oracle = dense_oracle(&ds, &u0, &[0.0, 0.0], 1.0);
    assert!(max_rel_diff(&flat(&fit), oracle.as_slice()) < 1e-8);
}

#[test]
fn compact_kernel_far_target_reports_support() {
    let ds = lattice_dataset(6, 6, 1, 1.0, 1, |u, _| u[0]);
    let cfg = FitConfig::new(KernelSpec::epanechnikov(), ScaleMatrix::identity(2), 0.05).unwrap();
    match fit_local(&ds, &[5.0, 5.0], &cfg) {
        Err(Error::InsufficientSupport { positive, .. }) => assert_eq!(positive, 0),
        other => panic!("expected InsufficientSupport, got {other:?}"),
    }
}

#[test]
fn collinear_design_is_singular_without_ridge_and_flagged_with_it() {
    // All locations on the diagonal u1 = u2: the two slope columns coincide.
    let mut ds = lattice_dataset(10, 10, 1, 1.0, 2, |u, _| u[0]);
    let recs: Vec<_> = ds
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.obs.u[1] = r.obs.u[0];
            r
        })
        .collect();
    ds = gwle::Dataset::new(vec![10, 10], 1, 2, true, recs).unwrap();
    let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), 0.3).unwrap();
    assert!(matches!(
        fit_local(&ds, &[0.5, 0.5], &cfg),
        Err(Error::SingularFit { .. })
    ));
    let fit = fit_local(&ds, &[0.5, 0.5], &cfg.clone().with_ridge(1e-6).unwrap()).unwrap();
    assert_eq!(fit.condition_flag, ConditionFlag::RidgeApplied);
    assert!((fit.beta_hat[0] - 0.5).abs() < 1e-3);
}

#[test]
fn dimension_mismatches_are_rejected() {
    let ds = lattice_dataset(5, 5, 1, 1.0, 1, |u, _| u[0]);
    let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), 0.3).unwrap();
    assert!(matches!(
        fit_local(&ds, &[0.5], &cfg),
        Err(Error::DimensionMismatch { .. })
    ));
    let cfg3 = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(3), 0.3).unwrap();
    assert!(matches!(
        fit_local(&ds, &[0.5, 0.5], &cfg3),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), 0.0).is_err());
    assert!(ScaleMatrix::new(vec![1.0, -1.0]).is_err());
}

#[test]
fn mlwe_matches_gwle_under_proportional_bandwidths() {
    let ds = lattice_dataset(14, 14, 2, 1.0, 11, |u, x| {
        (2.0 * u[0]).sin() * x[0] + u[1].powi(3) * x[1]
    });
    let scales = [1.7, 0.6];
    let h = 0.25;
    let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::new(scales.to_vec()).unwrap(), h).unwrap();
    let hm = BandwidthMatrix::new(scales.iter().map(|a| h / a).collect()).unwrap();
    for u0 in [[0.3, 0.4], [0.6, 0.6]] {
        let g = fit_local(&ds, &u0, &cfg).unwrap();
        let m = mlwe_fit_local(&ds, &u0, &hm, KernelSpec::gaussian()).unwrap();
        assert!(max_rel_diff(&flat(&g), &flat(&m)) <= 1e-10);
    }
}

#[test]
fn surface_keeps_target_order_and_predict_uses_covariates() {
    let ds = lattice_dataset(10, 10, 2, 1.0, 4, |u, x| (1.0 + u[0]) * x[0] + (2.0 - u[1]) * x[1]);
    let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), 0.2).unwrap();
    let targets = vec![vec![0.2, 0.3], vec![0.7, 0.1], vec![0.5, 0.5]];
    let surface = fit_surface(&ds, &targets, &cfg).unwrap();
    for (i, pt) in surface.iter().enumerate() {
        assert_eq!(pt.target, i);
        let fit = pt.result.as_ref().unwrap();
        assert_eq!(fit.location, targets[i]);
        let yhat = predict(fit, &[1.0, 2.0]).unwrap();
        let u = &targets[i];
        assert!((yhat - ((1.0 + u[0]) + 2.0 * (2.0 - u[1]))).abs() < 1e-9);
    }
    assert!(predict(surface[0].result.as_ref().unwrap(), &[1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn record_order_does_not_matter(seed in 0u64..1000, h in 0.1f64..0.5) {
        let ds = lattice_dataset(7, 6, 2, 1.0, seed, |u, x| u[0].exp() * x[0] + u[1] * x[1]);
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        order.shuffle(&mut rng);
        let shuffled = ds.permuted(&order).unwrap();
        let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), h).unwrap();
        let a = fit_local(&ds, &[0.5, 0.5], &cfg).unwrap();
        let b = fit_local(&shuffled, &[0.5, 0.5], &cfg).unwrap();
        prop_assert!(max_rel_diff(&flat(&a), &flat(&b)) < 1e-10);
    }

    #[test]
    fn scale_bandwidth_invariance(seed in 0u64..1000, c in 0.05f64..20.0, a1 in 0.3f64..3.0, a2 in 0.3f64..3.0) {
        let ds = lattice_dataset(8, 8, 1, 1.0, seed, |u, _| (u[0] - u[1]).sin());
        let s = ScaleMatrix::new(vec![a1, a2]).unwrap();
        let h = 0.3 * (a1 * a2).sqrt();
        let a = fit_local(&ds, &[0.5, 0.4], &FitConfig::new(KernelSpec::gaussian(), s.clone(), h).unwrap()).unwrap();
        let b = fit_local(&ds, &[0.5, 0.4], &FitConfig::new(KernelSpec::gaussian(), s.scaled(c).unwrap(), c * h).unwrap()).unwrap();
        prop_assert!(max_rel_diff(&flat(&a), &flat(&b)) < 1e-11);
    }

    #[test]
    fn weights_are_positive_and_bounded(d1 in -5.0f64..5.0, d2 in -5.0f64..5.0, h in 0.01f64..10.0) {
        for k in [KernelSpec::gaussian(), KernelSpec::epanechnikov(), KernelSpec::quartic()] {
            let s = ScaleMatrix::identity(2);
            let dist = gwle::distance(&[d1, d2], &[0.0, 0.0], &s).unwrap();
            let w = gwle::kernel_weight(dist, h, k).unwrap();
            prop_assert!(w >= 0.0 && w <= k.eval(0.0) + 1e-15);
        }
    }
}
