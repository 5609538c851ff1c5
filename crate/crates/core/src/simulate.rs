//! Point-pattern simulation: homogeneous and thinned Poisson processes, and
//! log-Gaussian Cox processes driven by a global or patchwork field.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::contrast::LocalFitResult;
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, SpaceTimeWindow};
use crate::grf::{FieldLookup, GrfRealization, GrfSampler, DEFAULT_BLOCK};
use crate::grid::SpaceTimeGrid;
use crate::intensity::Intensity;

/// Sub-seed for stream `stream` of a master seed (splitmix64 finalizer applied
/// to `master + (stream + 1) * golden_gamma`).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_points(rate: f64, window: &SpaceTimeWindow, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mean = rate * window.volume();
    if !(mean > 0.0 && mean.is_finite()) {
        return Vec::new();
    }
    let n = Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0);
    (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(window.x.lo..window.x.hi),
                rng.random_range(window.y.lo..window.y.hi),
                rng.random_range(window.t.lo..window.t.hi),
            )
        })
        .collect()
}

/// Nudges exact duplicates by one ulp in `x` (towards the window interior) so
/// the result satisfies the distinct-points invariant.
fn dedup_points(mut pts: Vec<Point>, window: &SpaceTimeWindow) -> Vec<Point> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    let key = |p: &Point| (p.x.to_bits(), p.y.to_bits(), p.t.to_bits());
    order.sort_by_key(|&i| key(&pts[i]));
    let mut seen = std::collections::HashSet::with_capacity(pts.len());
    for i in order {
        while !seen.insert(key(&pts[i])) {
            let x = pts[i].x;
            let up = f64::from_bits(x.to_bits() + 1);
            pts[i].x = if up <= window.x.hi { up } else { f64::from_bits(x.to_bits() - 1) };
        }
    }
    pts
}

fn pattern(pts: Vec<Point>, window: &SpaceTimeWindow) -> PointPattern {
    let pts = dedup_points(pts, window);
    PointPattern::new(pts, *window).expect("simulated points lie inside the window and are distinct")
}

/// Homogeneous Poisson process. A non-positive rate gives an empty pattern.
pub fn poisson_homogeneous(rate: f64, window: &SpaceTimeWindow, seed: u64) -> PointPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pattern(uniform_points(rate, window, &mut rng), window)
}

/// Inhomogeneous Poisson process by thinning a dominating process of rate
/// `max_rate`; `rate(p) / max_rate` is clamped to `[0, 1]`.
pub fn poisson_inhomogeneous<F>(rate: F, max_rate: f64, window: &SpaceTimeWindow, seed: u64) -> PointPattern
where
    F: Fn(&Point) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dominating = uniform_points(max_rate, window, &mut rng);
    let kept = dominating.into_iter().filter(|p| rng.random::<f64>() < (rate(p) / max_rate).clamp(0.0, 1.0)).collect();
    pattern(kept, window)
}

/// Source of the driving field.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum FieldSpec {
    Global(CovarianceModel),
    /// Patchwork field from per-point parameters of `pattern`.
    Local {
        global: CovarianceModel,
        fit: LocalFitResult,
        pattern: PointPattern,
        block: (usize, usize, usize),
    },
    /// `S == 0`: the baseline process itself.
    Zero,
}

impl FieldSpec {
    pub fn local(fit: LocalFitResult, pattern: PointPattern) -> Self {
        FieldSpec::Local { global: fit.global, fit, pattern, block: DEFAULT_BLOCK }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub window: SpaceTimeWindow,
    pub grid: SpaceTimeGrid,
    /// `lambda_hat(u, t)`; the generating intensity is `lambda_hat * exp(S)`.
    pub baseline: Intensity,
    pub field: FieldSpec,
    pub lookup: FieldLookup,
    pub seed: u64,
}

impl SimulationConfig {
    /// Constant baseline `n_expected / |W x T|` with a global field.
    pub fn with_expected(
        model: CovarianceModel,
        window: SpaceTimeWindow,
        grid: (usize, usize, usize),
        n_expected: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(n_expected >= 0.0 && n_expected.is_finite()) {
            return Err(Error::InvalidParameter(format!("expected count {n_expected} must be finite and >= 0")));
        }
        Ok(Self {
            window,
            grid: SpaceTimeGrid::new(window, grid.0, grid.1, grid.2)?,
            baseline: Intensity::Constant(n_expected / window.volume()),
            field: FieldSpec::Global(model),
            lookup: FieldLookup::Nearest,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.window != self.window {
            return Err(Error::ShapeMismatch("simulation grid does not tile the window".into()));
        }
        match &self.baseline {
            Intensity::Constant(v) if !(v.is_finite() && *v >= 0.0) => {
                Err(Error::InvalidParameter(format!("baseline intensity {v} must be finite and >= 0")))
            }
            Intensity::Gridded { values, .. } if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
                Err(Error::InvalidParameter("baseline intensity must be finite and >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPattern {
    pub pattern: PointPattern,
    /// `None` when the field is identically zero.
    pub field: Option<GrfRealization>,
    pub lambda_max: f64,
    pub n_dominating: usize,
}

/// Repeated LGCP draws sharing one covariance factorization.
#[derive(Debug, Clone)]
pub struct LgcpSimulator {
    cfg: SimulationConfig,
    sampler: Option<GrfSampler>,
    baseline_cells: Vec<f64>,
}

impl LgcpSimulator {
    pub fn new(cfg: SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let sampler = match &cfg.field {
            FieldSpec::Global(m) | FieldSpec::Local { global: m, .. } => Some(GrfSampler::new(m, &cfg.grid)?),
            FieldSpec::Zero => None,
        };
        let baseline_cells = cfg.baseline.on_grid(&cfg.grid);
        Ok(Self { cfg, sampler, baseline_cells })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    /// One realization. The field, the dominating process and the thinning
    /// uniforms use independent sub-streams of `seed`.
    pub fn simulate(&self, seed: u64) -> Result<SimulatedPattern> {
        let field = match (&self.cfg.field, &self.sampler) {
            (FieldSpec::Global(_), Some(s)) => Some(s.draw(derive_seed(seed, 0))),
            (FieldSpec::Local { fit, pattern, block, .. }, Some(s)) => {
                Some(s.draw_local(fit, pattern, *block, derive_seed(seed, 0))?)
            }
            _ => None,
        };
        let log_field = |i: usize| field.as_ref().map_or(0.0, |f| f.values[i]);
        let lambda_max =
            self.baseline_cells.iter().enumerate().map(|(i, b)| b * log_field(i).exp()).fold(0.0, f64::max);
        if !lambda_max.is_finite() {
            return Err(Error::Simulation(format!("generating intensity overflowed (max {lambda_max})")));
        }
        let window = self.cfg.window;
        if lambda_max <= 0.0 {
            warn!("generating intensity is zero everywhere; returning an empty pattern");
            return Ok(SimulatedPattern { pattern: PointPattern::empty(window), field, lambda_max, n_dominating: 0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let dominating = uniform_points(lambda_max, &window, &mut rng);
        let n_dominating = dominating.len();
        let mut thin = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
        let kept: Vec<Point> = dominating
            .into_iter()
            .filter(|p| {
                let s = field.as_ref().map_or(0.0, |f| f.at(p, self.cfg.lookup));
                let accept = self.cfg.baseline.at(p) * s.exp() / lambda_max;
                thin.random::<f64>() < accept
            })
            .collect();
        Ok(SimulatedPattern { pattern: pattern(kept, &window), field, lambda_max, n_dominating })
    }
}

/// LGCP by thinning: draw `S` on the grid, set `lambda_0 = lambda_hat exp(S)`,
/// simulate a homogeneous process at `max lambda_0` and keep each point with
/// probability `lambda_0(u, t) / lambda_max`.
pub fn lgcp_simulate(cfg: &SimulationConfig) -> Result<SimulatedPattern> {
    LgcpSimulator::new(cfg.clone())?.simulate(cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w50() -> SpaceTimeWindow {
        SpaceTimeWindow::unit_square(50.0).unwrap()
    }

    #[test]
    fn zero_rate_gives_empty_pattern() {
        assert!(poisson_homogeneous(0.0, &w50(), 1).is_empty());
        assert!(poisson_homogeneous(-1.0, &w50(), 1).is_empty());
    }

    #[test]
    fn poisson_count_mean() {
        let total: usize = (0..200).map(|s| poisson_homogeneous(20.0, &w50(), s).len()).sum();
        let mean = total as f64 / 200.0;
        assert!((mean - 1000.0).abs() < 3.0 * (1000.0f64 / 200.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|k| derive_seed(42, k)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn dedup_separates_collisions() {
        let w = w50();
        let p = Point::new(0.5, 0.5, 1.0);
        let out = dedup_points(vec![p, p, p, Point::new(1.0, 0.2, 3.0), Point::new(1.0, 0.2, 3.0)], &w);
        assert!(PointPattern::new(out, w).is_ok());
    }

    #[test]
    fn zero_field_is_homogeneous_poisson() {
        let mut cfg = SimulationConfig::with_expected(
            CovarianceModel::separable(1.0, 0.1, 1.0).unwrap(),
            w50(),
            (4, 4, 4),
            1000.0,
            3,
        )
        .unwrap();
        cfg.field = FieldSpec::Zero;
        let sim = lgcp_simulate(&cfg).unwrap();
        assert_eq!(sim.pattern.len(), sim.n_dominating);
        assert!((sim.lambda_max - 20.0).abs() < 1e-12);
    }

    #[test]
    fn simulation_is_reproducible() {
        let cfg = SimulationConfig::with_expected(
            CovarianceModel::separable(5.0, 0.1, 5.0).unwrap(),
            w50(),
            (16, 16, 25),
            1000.0,
            11,
        )
        .unwrap();
        let a = lgcp_simulate(&cfg).unwrap();
        let b = lgcp_simulate(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.pattern.points().iter().all(|p| w50().contains(p)));
    }
}
