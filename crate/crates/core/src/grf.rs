//! Gaussian random fields on a space-time grid.
//!
//! The separable exponential family factorizes as `C = C_s (x) C_t`, so a draw
//! is `mu + L_s Z L_t^T` with one Cholesky factor per axis group. Other
//! families use a dense Cholesky of the full cell covariance, capped at
//! [`DENSE_CELL_CAP`] cells.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::contrast::LocalFitResult;
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern};
use crate::grid::SpaceTimeGrid;
use crate::simulate::derive_seed;

pub const DENSE_CELL_CAP: usize = 4096;
/// Diagonal jitter tried in turn, relative to the variance.
const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
/// Default sub-grid block size of the patchwork field, in fine cells per axis.
pub const DEFAULT_BLOCK: (usize, usize, usize) = (4, 4, 4);

/// One realization of the field at the cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfRealization {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
    pub model: CovarianceModel,
    pub seed: u64,
}

/// How the field is read at locations between cell centres.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLookup {
    #[default]
    Nearest,
    /// Bilinear between the four nearest spatial centres, nearest in time.
    BilinearSpace,
}

impl std::str::FromStr for FieldLookup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(FieldLookup::Nearest),
            "bilinear" | "bilinear_space" => Ok(FieldLookup::BilinearSpace),
            _ => Err(Error::InvalidParameter(format!("unknown field lookup `{s}` (nearest, bilinear)"))),
        }
    }
}

impl GrfRealization {
    pub fn at(&self, p: &Point, lookup: FieldLookup) -> f64 {
        let g = &self.grid;
        match lookup {
            FieldLookup::Nearest => self.values[g.index_of(p)],
            FieldLookup::BilinearSpace => {
                let (_, _, it) = g.cell_of(p);
                let axis = |v: f64, lo: f64, step: f64, n: usize| -> (usize, usize, f64) {
                    let u = ((v - lo) / step - 0.5).clamp(0.0, (n - 1) as f64);
                    let k = (u.floor() as usize).min(n.saturating_sub(2));
                    let k1 = (k + 1).min(n - 1);
                    (k, k1, u - k as f64)
                };
                let (x0, x1, fx) = axis(p.x, g.window.x.lo, g.dx(), g.nx);
                let (y0, y1, fy) = axis(p.y, g.window.y.lo, g.dy(), g.ny);
                let v = |ix, iy| self.values[g.index(ix, iy, it)];
                (1.0 - fy) * ((1.0 - fx) * v(x0, y0) + fx * v(x1, y0)) + fy * ((1.0 - fx) * v(x0, y1) + fx * v(x1, y1))
            }
        }
    }
}

fn cholesky_with_jitter(mut a: DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let mut last = 0.0;
    for &j in &JITTERS {
        if j > last {
            for k in 0..a.nrows() {
                a[(k, k)] += (j - last) * scale;
            }
            last = j;
        }
        if let Some(c) = a.clone().cholesky() {
            return Ok(c.unpack());
        }
    }
    Err(Error::NotPositiveDefinite { jitter: last * scale })
}

fn spatial_centres(grid: &SpaceTimeGrid) -> Vec<(f64, f64)> {
    (0..grid.ny)
        .flat_map(|iy| (0..grid.nx).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| (grid.x_center(ix), grid.y_center(iy)))
        .collect()
}

/// Full covariance among a set of cells.
pub fn cell_covariance(m: &CovarianceModel, grid: &SpaceTimeGrid, cells: &[usize]) -> DMatrix<f64> {
    let centres: Vec<Point> = cells.iter().map(|&c| grid.center(c)).collect();
    DMatrix::from_fn(cells.len(), cells.len(), |a, b| {
        let (p, q) = (&centres[a], &centres[b]);
        m.cov_unchecked(p.spatial_distance(q), p.time_lag(q))
    })
}

#[derive(Debug)]
enum Factor {
    Kronecker { spatial: DMatrix<f64>, temporal: DMatrix<f64> },
    Dense(DMatrix<f64>),
}

/// Factorized covariance for repeated draws on one grid.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    model: CovarianceModel,
    grid: SpaceTimeGrid,
    factor: Arc<Factor>,
}

impl GrfSampler {
    pub fn new(model: &CovarianceModel, grid: &SpaceTimeGrid) -> Result<Self> {
        Self::with_cap(model, grid, DENSE_CELL_CAP)
    }

    pub fn with_cap(model: &CovarianceModel, grid: &SpaceTimeGrid, cap: usize) -> Result<Self> {
        model.validate()?;
        let factor = match model {
            CovarianceModel::SeparableExponential(p) => {
                let xy = spatial_centres(grid);
                let cs = DMatrix::from_fn(xy.len(), xy.len(), |a, b| {
                    let d = ((xy[a].0 - xy[b].0).powi(2) + (xy[a].1 - xy[b].1).powi(2)).sqrt();
                    p.sigma2 * (-d / p.alpha).exp()
                });
                let ts: Vec<f64> = (0..grid.nt).map(|it| grid.t_center(it)).collect();
                let ct = DMatrix::from_fn(ts.len(), ts.len(), |a, b| (-(ts[a] - ts[b]).abs() / p.beta).exp());
                Factor::Kronecker {
                    spatial: cholesky_with_jitter(cs, p.sigma2)?,
                    temporal: cholesky_with_jitter(ct, 1.0)?,
                }
            }
            CovarianceModel::Gneiting(_) => {
                if grid.len() > cap {
                    return Err(Error::GridTooLarge { cells: grid.len(), cap });
                }
                let cells: Vec<usize> = (0..grid.len()).collect();
                Factor::Dense(cholesky_with_jitter(cell_covariance(model, grid, &cells), model.sigma2())?)
            }
        };
        Ok(Self { model: *model, grid: *grid, factor: Arc::new(factor) })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    /// Covariance implied by the factorization, for checking.
    pub fn implied_covariance(&self) -> DMatrix<f64> {
        match &*self.factor {
            Factor::Kronecker { spatial, temporal } => {
                let l = spatial.kronecker(temporal);
                &l * l.transpose()
            }
            Factor::Dense(l) => l * l.transpose(),
        }
    }

    pub fn draw(&self, seed: u64) -> GrfRealization {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = self.model.field_mean();
        let values = match &*self.factor {
            Factor::Kronecker { spatial, temporal } => {
                let (ns, nt) = (spatial.nrows(), temporal.nrows());
                // row-major (cell, time) fill matches the cell ordering
                let z = DMatrix::from_fn(nt, ns, |_, _| StandardNormal.sample(&mut rng));
                let z = z.transpose();
                let s = spatial * z * temporal.transpose();
                let mut out = Vec::with_capacity(ns * nt);
                for c in 0..ns {
                    for it in 0..nt {
                        out.push(mu + s[(c, it)]);
                    }
                }
                out
            }
            Factor::Dense(l) => {
                let z = DVector::from_fn(l.nrows(), |_, _| StandardNormal.sample(&mut rng));
                (l * z).iter().map(|v| mu + v).collect()
            }
        };
        GrfRealization { grid: self.grid, values, model: self.model, seed }
    }
}

/// One draw with mean `-sigma2 / 2` and covariance `C` between cell centres.
pub fn grf_simulate(m: &CovarianceModel, grid: &SpaceTimeGrid, seed: u64) -> Result<GrfRealization> {
    Ok(GrfSampler::new(m, grid)?.draw(seed))
}

/// Cells of the grid grouped into blocks of `block` fine cells per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPartition {
    pub grid: SpaceTimeGrid,
    pub block: (usize, usize, usize),
}

impl BlockPartition {
    pub fn new(grid: SpaceTimeGrid, block: (usize, usize, usize)) -> Result<Self> {
        if block.0 == 0 || block.1 == 0 || block.2 == 0 {
            return Err(Error::InvalidParameter(format!("block size {block:?} must be positive")));
        }
        Ok(Self { grid, block })
    }

    fn counts(&self) -> (usize, usize, usize) {
        (self.grid.nx.div_ceil(self.block.0), self.grid.ny.div_ceil(self.block.1), self.grid.nt.div_ceil(self.block.2))
    }

    pub fn len(&self) -> usize {
        let (a, b, c) = self.counts();
        a * b * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_of(&self, p: &Point) -> usize {
        let (ix, iy, it) = self.grid.cell_of(p);
        let (bx, by, bt) = (ix / self.block.0, iy / self.block.1, it / self.block.2);
        let (nbx, _, nbt) = self.counts();
        (by * nbx + bx) * nbt + bt
    }

    /// Fine-cell indices of block `b`, ascending.
    pub fn cells(&self, b: usize) -> Vec<usize> {
        let (nbx, _, nbt) = self.counts();
        let (bt, s) = (b % nbt, b / nbt);
        let (bx, by) = (s % nbx, s / nbx);
        let g = &self.grid;
        let range = |k: usize, size: usize, n: usize| (k * size)..((k + 1) * size).min(n);
        let mut out = Vec::new();
        for iy in range(by, self.block.1, g.ny) {
            for ix in range(bx, self.block.0, g.nx) {
                for it in range(bt, self.block.2, g.nt) {
                    out.push(g.index(ix, iy, it));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Patchwork field from per-point parameters.
///
/// A global field is drawn first. In every block holding at least one point,
/// each point `i` contributes `mu_i + L_i z` on the block's cells, where `z`
/// is the whitened global draw on that block, and the block takes the average
/// of these contributions. Blocks without points keep the global values.
/// Each contribution is marginally a draw from the point's own model, and
/// points sharing the global parameters reproduce the global draw exactly.
pub fn grf_local(
    global: &CovarianceModel,
    local_fit: &LocalFitResult,
    p: &PointPattern,
    grid: &SpaceTimeGrid,
    block: (usize, usize, usize),
    seed: u64,
) -> Result<GrfRealization> {
    GrfSampler::new(global, grid)?.draw_local(local_fit, p, block, seed)
}

impl GrfSampler {
    pub fn draw_local(
        &self,
        local_fit: &LocalFitResult,
        p: &PointPattern,
        block: (usize, usize, usize),
        seed: u64,
    ) -> Result<GrfRealization> {
        if local_fit.params.len() != p.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} local parameter vectors for {} points",
                local_fit.params.len(),
                p.len()
            )));
        }
        let mut field = self.draw(derive_seed(seed, 0));
        field.seed = seed;
        let part = BlockPartition::new(self.grid, block)?;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); part.len()];
        for (i, q) in p.points().iter().enumerate() {
            members[part.block_of(q)].push(i);
        }
        let global = self.model;
        for (b, pts) in members.iter().enumerate() {
            if pts.is_empty() {
                continue;
            }
            let cells = part.cells(b);
            let lg = cholesky_with_jitter(cell_covariance(&global, &self.grid, &cells), global.sigma2())?;
            let centred =
                DVector::from_iterator(cells.len(), cells.iter().map(|&c| field.values[c] - global.field_mean()));
            let z =
                lg.solve_lower_triangular(&centred).ok_or_else(|| Error::Simulation("singular block factor".into()))?;
            let mut acc = vec![0.0; cells.len()];
            for &i in pts {
                let m = &local_fit.params[i];
                let block_values = if *m == global {
                    centred.clone()
                } else {
                    let li = cholesky_with_jitter(cell_covariance(m, &self.grid, &cells), m.sigma2())?;
                    li * &z
                };
                for (a, v) in acc.iter_mut().zip(block_values.iter()) {
                    *a += m.field_mean() + v;
                }
            }
            let k = pts.len() as f64;
            for (&c, a) in cells.iter().zip(acc) {
                field.values[c] = a / k;
            }
        }
        Ok(field)
    }
}
