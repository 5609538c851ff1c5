//! First-order intensity estimation.
//!
//! The Poisson log-likelihood is approximated on a quadrature scheme of data
//! and dummy points with counting weights `a_k = v / n_k`, which turns it into
//! a weighted Poisson regression with responses `y_k = e_k / a_k`. Local fits
//! multiply the quadrature weights by kernel weights centred on each
//! evaluation location.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, SpaceTimeWindow};
use crate::grid::SpaceTimeGrid;
use crate::kernels::{product_weight, BandwidthSet};

/// Most data points allowed in one quadrature cube by [`QuadratureScheme::auto`].
pub const MAX_DATA_PER_CUBE: usize = 8;
const MAX_CUBES_PER_AXIS: usize = 160;

/// A first-order intensity surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Constant(f64),
    /// Values at the cells of `grid`, looked up by nearest cell.
    Gridded {
        grid: SpaceTimeGrid,
        values: Vec<f64>,
    },
}

impl Intensity {
    /// `n / |W x T|`.
    pub fn constant_from(p: &PointPattern) -> Self {
        Intensity::Constant(p.constant_intensity())
    }

    pub fn gridded(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {} cells", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("intensity value {v} must be finite and >= 0")));
        }
        Ok(Intensity::Gridded { grid, values })
    }

    pub fn at(&self, p: &Point) -> f64 {
        match self {
            Intensity::Constant(v) => *v,
            Intensity::Gridded { grid, values } => values[grid.index_of(p)],
        }
    }

    pub fn at_points(&self, p: &PointPattern) -> Vec<f64> {
        p.points().iter().map(|q| self.at(q)).collect()
    }

    /// Values at the centres of `grid`.
    pub fn on_grid(&self, grid: &SpaceTimeGrid) -> Vec<f64> {
        grid.centers().map(|c| self.at(&c)).collect()
    }
}

/// Covariates sampled on a rectangular lattice; lookups snap each coordinate
/// to the nearest lattice value independently. A column named `offset` is
/// used as the offset `B(u, t)` instead of a regression covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    names: Vec<String>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    ts: Vec<f64>,
    /// `(ix * ny + iy) * nt + it` rows of `names.len()` values.
    values: Vec<f64>,
}

fn unique_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn nearest(axis: &[f64], v: f64) -> usize {
    let k = axis.partition_point(|&a| a < v);
    if k == 0 {
        0
    } else if k == axis.len() {
        axis.len() - 1
    } else if (v - axis[k - 1]) <= (axis[k] - v) {
        k - 1
    } else {
        k
    }
}

impl CovariateTable {
    pub fn from_rows(names: Vec<String>, rows: Vec<(Point, Vec<f64>)>) -> Result<Self> {
        let xs = unique_sorted(rows.iter().map(|r| r.0.x).collect());
        let ys = unique_sorted(rows.iter().map(|r| r.0.y).collect());
        let ts = unique_sorted(rows.iter().map(|r| r.0.t).collect());
        let cells = xs.len() * ys.len() * ts.len();
        if rows.is_empty() || rows.len() != cells {
            return Err(Error::InvalidParameter(format!(
                "covariate rows ({}) must cover the full {}x{}x{} lattice exactly once",
                rows.len(),
                xs.len(),
                ys.len(),
                ts.len()
            )));
        }
        let k = names.len();
        let mut values = vec![f64::NAN; cells * k];
        for (p, v) in rows {
            if v.len() != k {
                return Err(Error::ShapeMismatch(format!("covariate row has {} values, expected {k}", v.len())));
            }
            let ix = xs.partition_point(|&a| a < p.x);
            let iy = ys.partition_point(|&a| a < p.y);
            let it = ts.partition_point(|&a| a < p.t);
            let row = (ix * ys.len() + iy) * ts.len() + it;
            values[row * k..(row + 1) * k].copy_from_slice(&v);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("covariate lattice has missing or non-finite values".into()));
        }
        Ok(Self { names, xs, ys, ts, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, p: &Point) -> &[f64] {
        let k = self.names.len();
        let row =
            (nearest(&self.xs, p.x) * self.ys.len() + nearest(&self.ys, p.y)) * self.ts.len() + nearest(&self.ts, p.t);
        &self.values[row * k..(row + 1) * k]
    }

    fn offset_column(&self) -> Option<usize> {
        self.names.iter().position(|n| n == "offset")
    }
}

/// Design row `(1, z_1, ..., z_p)` and offset for a location.
#[derive(Debug, Clone, Default)]
pub enum Covariates {
    #[default]
    None,
    Table(CovariateTable),
    /// Columns computed from the coordinates, e.g. `Z = x`.
    Coordinates(Vec<CoordinateCovariate>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateCovariate {
    X,
    Y,
    T,
}

impl Covariates {
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        match self {
            Covariates::None => {}
            Covariates::Table(t) => {
                let off = t.offset_column();
                names.extend(t.names.iter().enumerate().filter(|(i, _)| Some(*i) != off).map(|(_, n)| n.clone()))
            }
            Covariates::Coordinates(c) => names.extend(c.iter().map(|c| format!("{c:?}").to_lowercase())),
        }
        names
    }

    /// Fills `row` with the design row and returns the offset.
    pub fn design(&self, p: &Point, row: &mut Vec<f64>) -> f64 {
        row.clear();
        row.push(1.0);
        match self {
            Covariates::None => 0.0,
            Covariates::Table(t) => {
                let off = t.offset_column();
                let v = t.lookup(p);
                row.extend(v.iter().enumerate().filter(|(i, _)| Some(*i) != off).map(|(_, x)| *x));
                off.map_or(0.0, |o| v[o])
            }
            Covariates::Coordinates(c) => {
                row.extend(c.iter().map(|c| match c {
                    CoordinateCovariate::X => p.x,
                    CoordinateCovariate::Y => p.y,
                    CoordinateCovariate::T => p.t,
                }));
                0.0
            }
        }
    }
}

/// Data points followed by dummy points, with counting weights.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    pub window: SpaceTimeWindow,
    pub lattice: SpaceTimeGrid,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub is_data: Vec<bool>,
    pub n_data: usize,
    pub covariates: Covariates,
    /// Row-major design matrix, `points.len()` rows of `n_coef` columns.
    design: Vec<f64>,
    offset: Vec<f64>,
    n_coef: usize,
}

impl QuadratureScheme {
    /// One dummy point at the centre of every cube of a `cube_counts`
    /// partition; each point in cube `k` gets weight `v / n_k`.
    pub fn build(p: &PointPattern, cube_counts: (usize, usize, usize)) -> Result<Self> {
        let lattice = SpaceTimeGrid::new(*p.window(), cube_counts.0, cube_counts.1, cube_counts.2)?;
        let dummies: Vec<Point> = lattice.centers().collect();
        Self::with_dummies(p, lattice, dummies)
    }

    /// Counting weights `v / n_k` for arbitrary dummy points on the cubes of
    /// `lattice`. Every cube must hold at least one dummy point.
    pub fn with_dummies(p: &PointPattern, lattice: SpaceTimeGrid, dummies: Vec<Point>) -> Result<Self> {
        if lattice.window != *p.window() {
            return Err(Error::ShapeMismatch("quadrature lattice must tile the pattern window".into()));
        }
        let n = p.len();
        let mut points: Vec<Point> = p.points().to_vec();
        points.extend(dummies);
        let cells: Vec<usize> = points.iter().map(|q| lattice.index_of(q)).collect();
        let mut occupancy = vec![0usize; lattice.len()];
        let mut has_dummy = vec![false; lattice.len()];
        for (k, &c) in cells.iter().enumerate() {
            occupancy[c] += 1;
            has_dummy[c] |= k >= n;
        }
        if let Some(c) = has_dummy.iter().position(|d| !d) {
            return Err(Error::InvalidParameter(format!("quadrature cube {c} holds no dummy point")));
        }
        let vol = lattice.cell_volume();
        let weights = cells.iter().map(|&c| vol / occupancy[c] as f64).collect();
        let mut is_data = vec![true; n];
        is_data.extend(std::iter::repeat_n(false, points.len() - n));
        let mut q = Self {
            window: *p.window(),
            lattice,
            points,
            weights,
            is_data,
            n_data: n,
            covariates: Covariates::None,
            design: Vec::new(),
            offset: Vec::new(),
            n_coef: 1,
        };
        q.rebuild_design();
        Ok(q)
    }

    /// Refines a cubic lattice until it has at least `min_dummy` cubes
    /// (default `4n`) and no cube holds more than [`MAX_DATA_PER_CUBE`] data points.
    pub fn auto(p: &PointPattern, min_dummy: Option<usize>) -> Result<Self> {
        let target = min_dummy.unwrap_or(4 * p.len()).max(p.len() + 1).max(8);
        let mut k = (target as f64).cbrt().ceil() as usize;
        loop {
            let lattice = SpaceTimeGrid::new(*p.window(), k, k, k)?;
            let mut occ = vec![0usize; lattice.len()];
            for q in p.points() {
                occ[lattice.index_of(q)] += 1;
            }
            let crowded = occ.iter().any(|&c| c > MAX_DATA_PER_CUBE);
            if !crowded || k >= MAX_CUBES_PER_AXIS {
                return Self::build(p, (k, k, k));
            }
            k = (k + k.div_ceil(4)).min(MAX_CUBES_PER_AXIS);
        }
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Self {
        self.covariates = covariates;
        self.rebuild_design();
        self
    }

    fn rebuild_design(&mut self) {
        let mut row = Vec::new();
        self.design.clear();
        self.offset.clear();
        for pt in &self.points {
            let b = self.covariates.design(pt, &mut row);
            self.design.extend_from_slice(&row);
            self.offset.push(b);
        }
        self.n_coef = row.len().max(1);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_dummy(&self) -> usize {
        self.points.len() - self.n_data
    }

    pub fn n_coef(&self) -> usize {
        self.n_coef
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `y_k = e_k / a_k`.
    pub fn responses(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.is_data).map(|(a, &e)| if e { 1.0 / a } else { 0.0 }).collect()
    }

    pub fn design_row(&self, k: usize) -> &[f64] {
        &self.design[k * self.n_coef..(k + 1) * self.n_coef]
    }

    fn linear_predictor(&self, k: usize, theta: &[f64]) -> f64 {
        self.design_row(k).iter().zip(theta).map(|(z, t)| z * t).sum::<f64>() + self.offset[k]
    }

    /// `lambda(u, t; theta)` at an arbitrary location.
    pub fn predict(&self, p: &Point, theta: &[f64]) -> f64 {
        let mut row = Vec::new();
        let b = self.covariates.design(p, &mut row);
        (row.iter().zip(theta).map(|(z, t)| z * t).sum::<f64>() + b).exp()
    }
}

/// `sum_k a_k (y_k log lambda_k - lambda_k) + sum_k a_k`.
pub fn poisson_loglik_approx(q: &QuadratureScheme, theta: &[f64]) -> Result<f64> {
    weighted_loglik(q, theta, None)
}

fn weighted_loglik(q: &QuadratureScheme, theta: &[f64], extra: Option<&[f64]>) -> Result<f64> {
    if theta.len() != q.n_coef {
        return Err(Error::ShapeMismatch(format!("theta has {} entries, expected {}", theta.len(), q.n_coef)));
    }
    let mut total = 0.0;
    for k in 0..q.len() {
        let w = extra.map_or(1.0, |e| e[k]);
        if w == 0.0 {
            continue;
        }
        let eta = q.linear_predictor(k, theta);
        let lambda = eta.exp();
        if !lambda.is_finite() {
            return Err(Error::NonFinite(format!("intensity at quadrature point {k}")));
        }
        let e = if q.is_data[k] { 1.0 } else { 0.0 };
        total += w * (e * eta - q.weights[k] * lambda + q.weights[k]);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityFit {
    pub names: Vec<String>,
    /// Intercept first.
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub deviance_change: f64,
    pub converged: bool,
    #[serde(skip)]
    pub fitted_log_intensity: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-8 }
    }
}

fn collinear_columns(q: &QuadratureScheme, weights: &[f64], names: &[String]) -> Vec<String> {
    let p = q.n_coef;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut bad = Vec::new();
    for (c, name) in names.iter().enumerate().take(p) {
        let col: Vec<f64> = (0..q.len()).map(|k| q.design_row(k)[c] * weights[k].sqrt()).collect();
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut resid = col;
        for b in &basis {
            let dot: f64 = resid.iter().zip(b).map(|(x, y)| x * y).sum();
            resid.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            bad.push(name.clone());
        } else {
            basis.push(resid.into_iter().map(|v| v / norm).collect());
        }
    }
    bad
}

/// Weighted Poisson regression with log link by iteratively reweighted
/// least squares. `extra_weights` multiplies the quadrature weights
/// (local likelihood).
pub fn fit_poisson(q: &QuadratureScheme, extra_weights: Option<&[f64]>) -> Result<IntensityFit> {
    fit_poisson_with(q, extra_weights, IrlsOptions::default())
}

pub fn fit_poisson_with(
    q: &QuadratureScheme,
    extra_weights: Option<&[f64]>,
    opts: IrlsOptions,
) -> Result<IntensityFit> {
    let m = q.len();
    let p = q.n_coef;
    let names = q.covariates.names();
    if let Some(e) = extra_weights {
        if e.len() != m {
            return Err(Error::ShapeMismatch(format!("{} extra weights for {m} quadrature points", e.len())));
        }
        if e.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("extra weights must be finite and >= 0".into()));
        }
    }
    let extra = |k: usize| extra_weights.map_or(1.0, |e| e[k]);
    let a: Vec<f64> = (0..m).map(|k| q.weights[k] * extra(k)).collect();
    let data_mass: f64 = (0..m).filter(|&k| q.is_data[k]).map(extra).sum();
    if !(data_mass > 0.0) {
        return Err(Error::NoEffectiveData);
    }
    let bad = collinear_columns(q, &a, &names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }

    let y = q.responses();
    let mut theta = vec![0.0; p];
    let base: f64 = (0..m).map(|k| a[k] * q.offset[k].exp()).sum();
    theta[0] = (data_mass / base).ln();

    let objective = |theta: &[f64]| weighted_loglik(q, theta, extra_weights);
    let mut ll = objective(&theta)?;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut grad = DVector::<f64>::zeros(p);
        for k in 0..m {
            if a[k] == 0.0 {
                continue;
            }
            let mu = q.linear_predictor(k, &theta).exp();
            let w = a[k] * mu;
            let r = a[k] * (y[k] - mu);
            let z = q.design_row(k);
            for i in 0..p {
                grad[i] += z[i] * r;
                for j in 0..=i {
                    xtwx[(i, j)] += z[i] * w * z[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                xtwx[(j, i)] = xtwx[(i, j)];
            }
        }
        let step = match xtwx.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => xtwx.lu().solve(&grad).ok_or_else(|| Error::RankDeficient(names.clone()))?,
        };
        // Newton step, halved until the log-likelihood does not decrease.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if let Ok(v) = objective(&cand) {
                if v >= ll {
                    accepted = Some((cand, v));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, v)) = accepted else {
            converged = true;
            change = 0.0;
            break;
        };
        // deviance = -2 loglik + const
        change = 2.0 * (v - ll).abs() / (2.0 * v.abs() + 0.1);
        debug_assert!(v >= ll);
        theta = cand;
        ll = v;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let fitted_log_intensity = (0..m).map(|k| q.linear_predictor(k, &theta)).collect();
    Ok(IntensityFit { names, theta, loglik: ll, iterations, deviance_change: change, converged, fitted_log_intensity })
}

/// Local Poisson fits at the centres of `eval_grid`.
#[derive(Debug, Clone)]
pub struct LocalIntensityField {
    pub grid: SpaceTimeGrid,
    pub bandwidths: BandwidthSet,
    pub names: Vec<String>,
    /// One entry per grid cell; `Err` holds the message of a failed fit.
    pub fits: Vec<std::result::Result<LocalFit, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub location: Point,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
}

impl LocalIntensityField {
    /// Intensity surface on the evaluation grid; failed cells take the mean of
    /// the successful ones.
    pub fn to_intensity(&self) -> Result<Intensity> {
        let ok: Vec<f64> = self.fits.iter().filter_map(|f| f.as_ref().ok().map(|f| f.lambda)).collect();
        if ok.is_empty() {
            return Err(Error::NoEffectiveData);
        }
        let fill = ok.iter().sum::<f64>() / ok.len() as f64;
        let values = self.fits.iter().map(|f| f.as_ref().map_or(fill, |f| f.lambda)).collect();
        Intensity::gridded(self.grid, values)
    }
}

/// Kernel weights of every quadrature point relative to `center`.
pub fn local_weights(q: &QuadratureScheme, bw: &BandwidthSet, center: &Point) -> Vec<f64> {
    q.points.iter().map(|u| product_weight(bw, center.x - u.x, center.y - u.y, center.t - u.t)).collect()
}

pub fn fit_local_intensity(q: &QuadratureScheme, bw: &BandwidthSet, eval_grid: &SpaceTimeGrid) -> LocalIntensityField {
    let fits = (0..eval_grid.len())
        .into_par_iter()
        .map(|c| {
            let location = eval_grid.center(c);
            let w = local_weights(q, bw, &location);
            let fit = fit_poisson(q, Some(&w)).map_err(|e| e.to_string())?;
            let lambda = q.predict(&location, &fit.theta);
            Ok(LocalFit { location, theta: fit.theta, lambda, converged: fit.converged })
        })
        .collect();
    LocalIntensityField { grid: *eval_grid, bandwidths: *bw, names: q.covariates.names(), fits }
}
