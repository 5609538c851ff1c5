//! Cross-module properties of the minimum-contrast and intensity fits.

use proptest::prelude::*;
use stlgcp::contrast::{fit_local_from_stack, Transform};
use stlgcp::intensity::{fit_local_intensity, CoordinateCovariate, Covariates};
use stlgcp::simulate::derive_seed;
use stlgcp::stats::{lista_weighted_average, pcf_mean};
use stlgcp::*;

fn window() -> SpaceTimeWindow {
    SpaceTimeWindow::unit_square(20.0).unwrap()
}

fn clustered(seed: u64, n: f64) -> PointPattern {
    let m = CovarianceModel::separable(3.0, 0.1, 2.0).unwrap();
    let cfg = SimulationConfig::with_expected(m, window(), (16, 16, 20), n, seed).unwrap();
    lgcp_simulate(&cfg).unwrap().pattern
}

fn setup(p: &PointPattern) -> (Vec<f64>, ContrastSpec, BandwidthSet) {
    let lam = vec![p.constant_intensity(); p.len()];
    let grid = LagGrid::evenly_spaced(0.3, 5.0, 8, 8).unwrap();
    (lam, ContrastSpec::new(grid, ModelFamily::SeparableExponential), BandwidthSet::auto(p).unwrap())
}

#[test]
fn global_fit_ignores_point_order() {
    let p = clustered(1, 250.0);
    let (lam, spec, bw) = setup(&p);
    let a = fit_global(&p, &lam, &spec, &bw, None, &FitOptions::default()).unwrap();
    let order: Vec<usize> = (0..p.len()).rev().collect();
    let q = p.permuted(&order);
    let b = fit_global(&q, &lam, &spec, &bw, None, &FitOptions::default()).unwrap();
    for (x, y) in [
        (a.params.sigma2(), b.params.sigma2()),
        (a.params.alpha(), b.params.alpha()),
        (a.params.beta(), b.params.beta()),
    ] {
        assert!((x - y).abs() <= 1e-6 * x.abs(), "{x} vs {y}");
    }
}

#[test]
fn fits_are_bit_reproducible() {
    let p = clustered(2, 200.0);
    let (lam, spec, bw) = setup(&p);
    let a = fit_local(&p, &lam, &spec, &bw, None, &FitOptions::default()).unwrap();
    let b = fit_local(&p, &lam, &spec, &bw, None, &FitOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn local_fit_never_worse_than_global_on_its_own_curve() {
    let p = clustered(3, 250.0);
    let (lam, spec, bw) = setup(&p);
    for spec in [spec.clone(), spec.with_transform(Transform::Log)] {
        let stack = pcf_local_all(&p, &lam, &bw, &spec.grid, EdgeCorrection::Translation).unwrap();
        let global = fit_global(&p, &lam, &spec, &bw, None, &FitOptions::default()).unwrap();
        let local = fit_local_from_stack(&stack, &p, &spec, &bw, &global, &FitOptions::default()).unwrap();
        for i in 0..p.len() {
            let target = lista_weighted_average(&stack, &p, &bw, i).unwrap();
            let own = contrast_value(&spec, &target, &local.params[i]).unwrap();
            let at_global = contrast_value(&spec, &target, &global.params).unwrap();
            assert!(own <= at_global, "point {i}: {own} > {at_global}");
            assert!((own - local.contrast[i]).abs() <= 1e-12 * own.max(1.0));
        }
    }
}

#[test]
fn flat_weights_collapse_every_local_estimator() {
    let p = clustered(4, 200.0);
    let (lam, spec, bw) = setup(&p);
    let flat = bw.with_local(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let stack = pcf_local_all(&p, &lam, &flat, &spec.grid, EdgeCorrection::Translation).unwrap();
    let global_curve = pcf_mean(&stack);
    for i in [0, p.len() / 2, p.len() - 1] {
        assert_eq!(lista_weighted_average(&stack, &p, &flat, i).unwrap().surface(), global_curve.surface());
    }

    let q = QuadratureScheme::auto(&p, None)
        .unwrap()
        .with_covariates(Covariates::Coordinates(vec![CoordinateCovariate::T]));
    let global = fit_poisson(&q, None).unwrap();
    let eval = SpaceTimeGrid::new(window(), 2, 2, 2).unwrap();
    for fit in fit_local_intensity(&q, &flat.with_weight_kernel(KernelKind::Box), &eval).fits {
        let fit = fit.unwrap();
        for (a, b) in fit.theta.iter().zip(&global.theta) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn noiseless_curves_are_recovered_across_the_catalog() {
    let grid = LagGrid::default_for(&SpaceTimeWindow::unit_square(50.0).unwrap());
    for s in stlgcp::replicate::catalog().iter().filter(|s| s.model.family() == ModelFamily::SeparableExponential) {
        let values = grid.cells().map(|(r, h)| pcf_theoretical(&s.model, r, h).unwrap()).collect();
        let curve = stats::SummaryStatistic::single(grid.clone(), stats::StatisticKind::GlobalPcf, values).unwrap();
        let spec = ContrastSpec::new(grid.clone(), s.model.family());
        let fit = contrast::fit_curve(
            &spec,
            &curve,
            &contrast::default_starts(&spec, &curve).unwrap(),
            &FitOptions::default(),
        )
        .unwrap();
        let scale = curve.surface().iter().map(|v| v * v).sum::<f64>() / grid.len() as f64;
        // The simplex stops at relative steps near 1e-6.
        assert!(fit.contrast < 1e-9 * scale, "{}: contrast {} at scale {scale}", s.id, fit.contrast);
        for (got, want) in [
            (fit.params.sigma2(), s.model.sigma2()),
            (fit.params.alpha(), s.model.alpha()),
            (fit.params.beta(), s.model.beta()),
        ] {
            assert!((got / want - 1.0).abs() < 1e-3, "{}: {:?}", s.id, fit.params);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn contrast_is_non_negative_and_zero_only_at_the_curve(
        s2 in 0.5f64..8.0, a in 0.02f64..0.3, b in 0.5f64..10.0,
        s2b in 0.5f64..8.0, ab in 0.02f64..0.3, bb in 0.5f64..10.0,
    ) {
        let grid = LagGrid::evenly_spaced(0.35, 12.5, 6, 6).unwrap();
        let truth = CovarianceModel::separable(s2, a, b).unwrap();
        let other = CovarianceModel::separable(s2b, ab, bb).unwrap();
        let values = grid.cells().map(|(r, h)| pcf_theoretical(&truth, r, h).unwrap()).collect();
        let curve = stats::SummaryStatistic::single(grid.clone(), stats::StatisticKind::GlobalPcf, values).unwrap();
        for t in [Transform::Identity, Transform::Log] {
            let spec = ContrastSpec::new(grid.clone(), ModelFamily::SeparableExponential).with_transform(t);
            let at_truth = contrast_value(&spec, &curve, &truth).unwrap();
            // ln(exp(c)) rounds, so only the identity transform is exactly zero.
            match t {
                Transform::Identity => prop_assert_eq!(at_truth, 0.0),
                Transform::Log => prop_assert!(at_truth < 1e-28),
            }
            let v = contrast_value(&spec, &curve, &other).unwrap();
            prop_assert!(v >= 0.0);
            if truth != other {
                prop_assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn intercept_only_fit_is_the_count_over_volume(seed in 0u64..1000, rate in 1.0f64..30.0) {
        let p = poisson_homogeneous(rate, &window(), derive_seed(seed, 9));
        prop_assume!(p.len() >= 3);
        let q = QuadratureScheme::auto(&p, None).unwrap();
        prop_assert!((q.total_weight() - window().volume()).abs() < 1e-9);
        let fit = fit_poisson(&q, None).unwrap();
        prop_assert!((fit.theta[0] - (p.len() as f64 / window().volume()).ln()).abs() < 1e-6);
    }
}
