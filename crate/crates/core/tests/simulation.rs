//! Monte Carlo checks on the field and pattern simulators.

use stlgcp::contrast::LocalFitResult;
use stlgcp::grf::{grf_local, DEFAULT_BLOCK};
use stlgcp::simulate::{derive_seed, poisson_inhomogeneous, FieldSpec};
use stlgcp::*;

fn window() -> SpaceTimeWindow {
    SpaceTimeWindow::unit_square(10.0).unwrap()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn homogeneous_counts_match_rate() {
    let counts: Vec<f64> =
        (0..200).map(|k| poisson_homogeneous(30.0, &window(), derive_seed(1, k)).len() as f64).collect();
    let (m, sd) = mean_sd(&counts);
    // Poisson with mean 300.
    assert!((m - 300.0).abs() < 3.0 * (300.0f64 / 200.0).sqrt(), "mean count {m}");
    assert!((sd * sd / 300.0 - 1.0).abs() < 0.3, "dispersion {}", sd * sd / 300.0);
}

#[test]
fn inhomogeneous_thinning_follows_the_rate() {
    let w = window();
    let mut left = 0usize;
    let mut total = 0usize;
    for k in 0..100 {
        let p = poisson_inhomogeneous(|q: &Point| if q.x < 0.5 { 40.0 } else { 10.0 }, 40.0, &w, derive_seed(2, k));
        left += p.points().iter().filter(|q| q.x < 0.5).count();
        total += p.len();
    }
    let share = left as f64 / total as f64;
    assert!((share - 0.8).abs() < 0.01, "left share {share}");
}

#[test]
fn lgcp_mean_count_is_the_baseline_expectation() {
    let m = CovarianceModel::separable(1.0, 0.1, 2.0).unwrap();
    let sim =
        LgcpSimulator::new(SimulationConfig::with_expected(m, window(), (16, 16, 20), 200.0, 0).unwrap()).unwrap();
    let counts: Vec<f64> = (0..200).map(|k| sim.simulate(derive_seed(3, k)).unwrap().pattern.len() as f64).collect();
    let (mean, sd) = mean_sd(&counts);
    assert!((mean - 200.0).abs() < 3.0 * sd / (200f64).sqrt(), "mean {mean}, sd {sd}");
    // Clustering inflates the count variance well beyond Poisson.
    assert!(sd * sd > 2.0 * 200.0);
}

#[test]
fn field_spatial_correlation_decays_like_the_model() {
    let w = SpaceTimeWindow::new((0.0, 2.0), (0.0, 2.0), (0.0, 1.0)).unwrap();
    let grid = SpaceTimeGrid::new(w, 40, 40, 1).unwrap();
    let m = CovarianceModel::separable(2.0, 0.2, 1.0).unwrap();
    let sampler = GrfSampler::new(&m, &grid).unwrap();
    let mu = m.field_mean();
    for lag in [2usize, 4, 8] {
        let mut acc = 0.0;
        let mut k = 0.0;
        for s in 0..60 {
            let v = sampler.draw(s).values;
            for iy in 0..40 {
                for ix in 0..40 - lag {
                    acc += (v[grid.index(ix, iy, 0)] - mu) * (v[grid.index(ix + lag, iy, 0)] - mu);
                    k += 1.0;
                }
            }
        }
        let rho = acc / k / 2.0;
        let expected = (-(lag as f64 * 0.05) / 0.2).exp();
        assert!((rho - expected).abs() < 0.06, "lag {lag}: {rho} vs {expected}");
    }
}

#[test]
fn local_field_at_global_parameters_is_the_global_field() {
    let w = window();
    let m = CovarianceModel::separable(3.0, 0.2, 3.0).unwrap();
    let grid = SpaceTimeGrid::new(w, 12, 12, 8).unwrap();
    let p = poisson_homogeneous(15.0, &w, 9);
    let bw = BandwidthSet::new(0.1, 1.0, 0.3, 0.3, 3.0).unwrap();
    let uniform = LocalFitResult::uniform(m, p.len(), bw);
    let local = grf_local(&m, &uniform, &p, &grid, DEFAULT_BLOCK, 44).unwrap();
    let global = GrfSampler::new(&m, &grid).unwrap().draw(derive_seed(44, 0));
    for (a, b) in local.values.iter().zip(&global.values) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn local_field_with_larger_variance_spreads_occupied_blocks() {
    let w = window();
    let m = CovarianceModel::separable(1.0, 0.2, 3.0).unwrap();
    let grid = SpaceTimeGrid::new(w, 8, 8, 8).unwrap();
    let p = poisson_homogeneous(40.0, &w, 5);
    let bw = BandwidthSet::new(0.1, 1.0, 0.3, 0.3, 3.0).unwrap();
    let mut fit = LocalFitResult::uniform(m, p.len(), bw);
    let hot = CovarianceModel::separable(4.0, 0.2, 3.0).unwrap();
    fit.params.iter_mut().for_each(|q| *q = hot);
    let sampler = GrfSampler::new(&m, &grid).unwrap();
    let (mut v_local, mut v_global) = (Vec::new(), Vec::new());
    for s in 0..40 {
        v_local.extend(sampler.draw_local(&fit, &p, DEFAULT_BLOCK, s).unwrap().values);
        v_global.extend(sampler.draw(derive_seed(s, 0)).values);
    }
    let (sd_l, sd_g) = (mean_sd(&v_local).1, mean_sd(&v_global).1);
    // Every block is occupied, so the field has the local variance 4.
    assert!((sd_g - 1.0).abs() < 0.15 && (sd_l - 2.0).abs() < 0.3, "{sd_g} {sd_l}");
}

#[test]
fn zero_field_spec_gives_poisson_counts() {
    let w = window();
    let mut cfg =
        SimulationConfig::with_expected(CovarianceModel::separable(1.0, 0.1, 1.0).unwrap(), w, (4, 4, 4), 150.0, 0)
            .unwrap();
    cfg.field = FieldSpec::Zero;
    let sim = LgcpSimulator::new(cfg).unwrap();
    let counts: Vec<f64> = (0..200).map(|k| sim.simulate(k).unwrap().pattern.len() as f64).collect();
    let (m, sd) = mean_sd(&counts);
    assert!((m - 150.0).abs() < 3.0 * (150.0f64 / 200.0).sqrt());
    assert!((sd * sd / 150.0 - 1.0).abs() < 0.3);
}

#[test]
fn simulations_are_reproducible_from_the_seed() {
    let m = CovarianceModel::gneiting(2.0, 0.1, 2.0, 1.0).unwrap();
    let cfg = SimulationConfig::with_expected(m, window(), (8, 8, 8), 100.0, 77).unwrap();
    let a = lgcp_simulate(&cfg).unwrap();
    let b = lgcp_simulate(&cfg).unwrap();
    assert_eq!(a.pattern.points(), b.pattern.points());
    let c = LgcpSimulator::new(cfg).unwrap().simulate(78).unwrap();
    assert_ne!(a.pattern.points(), c.pattern.points());
}
