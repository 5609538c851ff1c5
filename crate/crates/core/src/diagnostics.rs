//! Monte Carlo goodness-of-fit test based on the inhomogeneous K-function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::LocalFitResult;
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::grf::{FieldLookup, DEFAULT_BLOCK};
use crate::grid::SpaceTimeGrid;
use crate::intensity::Intensity;
use crate::simulate::{derive_seed, FieldSpec, LgcpSimulator, SimulationConfig};
use crate::stats::{k_inhom, LagGrid};

/// Cells whose replicate variance is below this are left out of `T`.
pub const VARIANCE_FLOOR: f64 = 1e-12;
pub const DEFAULT_Q: usize = 39;
const MAX_RETRIES: u64 = 5;

/// The model under test.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum FittedModel {
    Global(CovarianceModel),
    /// Per-point parameters of `pattern`, simulated through the patchwork field.
    Local {
        fit: LocalFitResult,
        pattern: PointPattern,
    },
    /// Poisson process with the given intensity (no clustering).
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    pub q: usize,
    /// Cells per axis of the simulation grid.
    pub sim_grid: (usize, usize, usize),
    pub lookup: FieldLookup,
    pub block: (usize, usize, usize),
    /// Nominal pointwise level of the envelopes, `2 / (Q + 1)`.
    pub alpha_level: f64,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            sim_grid: (32, 32, 50),
            lookup: FieldLookup::Nearest,
            block: DEFAULT_BLOCK,
            alpha_level: 2.0 / (DEFAULT_Q as f64 + 1.0),
        }
    }
}

impl DiagnosticOptions {
    pub fn with_q(mut self, q: usize) -> Self {
        self.q = q;
        self.alpha_level = 2.0 / (q as f64 + 1.0);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticResult {
    pub t_star: f64,
    pub t_q: Vec<f64>,
    pub p_value: f64,
    pub q: usize,
    pub alpha_level: f64,
    pub cells_excluded: usize,
    pub r_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// Row-major `(r, h)` surfaces.
    pub observed: Vec<f64>,
    pub e_k: Vec<f64>,
    pub v_k: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub seed: u64,
}

/// `sum over cells of (K - E_K) / sqrt(V_K)`, skipping cells with
/// `V_K < 1e-12`. Returns the statistic and the number of skipped cells.
pub fn test_statistic(k_hat: &[f64], e_k: &[f64], v_k: &[f64]) -> Result<(f64, usize)> {
    if k_hat.len() != e_k.len() || e_k.len() != v_k.len() {
        return Err(Error::ShapeMismatch(format!("K has {} cells, E_K {}, V_K {}", k_hat.len(), e_k.len(), v_k.len())));
    }
    let mut t = 0.0;
    let mut excluded = 0;
    for ((k, e), v) in k_hat.iter().zip(e_k).zip(v_k) {
        if *v < VARIANCE_FLOOR {
            excluded += 1;
        } else {
            t += (k - e) / v.sqrt();
        }
    }
    if excluded == k_hat.len() {
        return Err(Error::DegenerateVariance);
    }
    Ok((t, excluded))
}

/// `(1 + #{T_q > T*}) / (Q + 1)`.
pub fn p_value(t_star: f64, t_q: &[f64]) -> f64 {
    let above = t_q.iter().filter(|&&t| t > t_star).count();
    (1 + above) as f64 / (t_q.len() + 1) as f64
}

/// Cellwise mean, sample variance, minimum and maximum over replicates.
pub fn replicate_moments(replicates: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = replicates.first().map_or(0, Vec::len);
    let q = replicates.len() as f64;
    let mut mean = vec![0.0; g];
    let mut lower = vec![f64::INFINITY; g];
    let mut upper = vec![f64::NEG_INFINITY; g];
    for k in replicates {
        for c in 0..g {
            mean[c] += k[c] / q;
            lower[c] = lower[c].min(k[c]);
            upper[c] = upper[c].max(k[c]);
        }
    }
    let mut var = vec![0.0; g];
    if replicates.len() > 1 {
        for k in replicates {
            for c in 0..g {
                var[c] += (k[c] - mean[c]).powi(2) / (q - 1.0);
            }
        }
    }
    // rounding can put the mean a hair outside [min, max] for constant cells
    for c in 0..g {
        mean[c] = mean[c].clamp(lower[c], upper[c]);
    }
    (mean, var, lower, upper)
}

fn simulator(
    window: crate::geometry::SpaceTimeWindow,
    intensity: &Intensity,
    fitted: &FittedModel,
    opts: &DiagnosticOptions,
    seed: u64,
) -> Result<LgcpSimulator> {
    let field = match fitted {
        FittedModel::Global(m) => FieldSpec::Global(*m),
        FittedModel::Local { fit, pattern } => {
            FieldSpec::Local { global: fit.global, fit: fit.clone(), pattern: pattern.clone(), block: opts.block }
        }
        FittedModel::Poisson => FieldSpec::Zero,
    };
    let (nx, ny, nt) = opts.sim_grid;
    LgcpSimulator::new(SimulationConfig {
        window,
        grid: SpaceTimeGrid::new(window, nx, ny, nt)?,
        baseline: intensity.clone(),
        field,
        lookup: opts.lookup,
        seed,
    })
}

/// Simulates `Q` patterns from the fitted model, computes their K-functions
/// with the same intensity used for the data, and ranks the data's `T*`
/// among the replicate `T_q`. Replicate `q` uses sub-seed `q` of `seed`; a
/// replicate with fewer than two points is redrawn from stream
/// `q + attempt * 2^32`, at most five times.
pub fn run_mc_test(
    p: &PointPattern,
    intensity: &Intensity,
    fitted: &FittedModel,
    grid: &LagGrid,
    opts: &DiagnosticOptions,
    seed: u64,
) -> Result<DiagnosticResult> {
    if opts.q == 0 {
        return Err(Error::InvalidParameter("Q must be at least 1".into()));
    }
    let observed = k_inhom(p, &intensity.at_points(p), grid)?.values;
    let sim = simulator(*p.window(), intensity, fitted, opts, seed)?;

    let replicates: Vec<Vec<f64>> = (0..opts.q as u64)
        .into_par_iter()
        .map(|q| {
            for attempt in 0..=MAX_RETRIES {
                let s = sim.simulate(derive_seed(seed, q + (attempt << 32)))?;
                if s.pattern.len() >= 2 {
                    return Ok(k_inhom(&s.pattern, &intensity.at_points(&s.pattern), grid)?.values);
                }
            }
            Err(Error::Simulation(format!("replicate {q} had fewer than 2 points after {MAX_RETRIES} retries")))
        })
        .collect::<Result<_>>()?;

    let (e_k, v_k, lower, upper) = replicate_moments(&replicates);
    let (t_star, cells_excluded) = test_statistic(&observed, &e_k, &v_k)?;
    let t_q = replicates.iter().map(|k| test_statistic(k, &e_k, &v_k).map(|t| t.0)).collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticResult {
        p_value: p_value(t_star, &t_q),
        t_star,
        t_q,
        q: opts.q,
        alpha_level: opts.alpha_level,
        cells_excluded,
        r_values: grid.r_values().to_vec(),
        h_values: grid.h_values().to_vec(),
        observed,
        e_k,
        v_k,
        lower,
        upper,
        seed,
    })
}
