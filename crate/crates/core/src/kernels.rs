//! Smoothing kernels and bandwidth rules.
//!
//! The pair correlation estimator smooths with Epanechnikov kernels of
//! bandwidths `eps_space` and `eps_time`. The local likelihood and the
//! averaging of local pair correlation functions use product weights
//! `w(dx) w(dy) w(dt)` with bandwidths `sigma_x`, `sigma_y` and `sigma_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kth_nearest_distance, NeighborMetric, Point, PointPattern};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Epanechnikov,
    #[default]
    Gaussian,
    Box,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "gaussian" => Ok(KernelKind::Gaussian),
            "box" => Ok(KernelKind::Box),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel `{other}` (expected epanechnikov, gaussian or box)"
            ))),
        }
    }
}

/// A one-dimensional kernel with a bandwidth. Every variant integrates to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel1D {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl Kernel1D {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be > 0")));
        }
        Ok(Self { kind, bandwidth })
    }

    pub fn epanechnikov(bandwidth: f64) -> Result<Self> {
        Self::new(KernelKind::Epanechnikov, bandwidth)
    }

    /// Half-width of the support; infinite for the Gaussian.
    pub fn support(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => f64::INFINITY,
            _ => self.bandwidth,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        kernel_eval(self.kind, self.bandwidth, x)
    }
}

#[inline]
pub fn kernel_eval(kind: KernelKind, b: f64, x: f64) -> f64 {
    match kind {
        KernelKind::Epanechnikov => {
            let u = x / b;
            if u.abs() < 1.0 {
                0.75 / b * (1.0 - u * u)
            } else {
                0.0
            }
        }
        KernelKind::Gaussian => {
            let u = x / b;
            INV_SQRT_2PI / b * (-0.5 * u * u).exp()
        }
        KernelKind::Box => {
            if x.abs() <= b {
                0.5 / b
            } else {
                0.0
            }
        }
    }
}

/// Bandwidths of the pair correlation kernel and of the local weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSet {
    pub eps_space: f64,
    pub eps_time: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_t: f64,
    #[serde(default)]
    pub weight_kernel: KernelKind,
}

impl BandwidthSet {
    pub fn new(eps_space: f64, eps_time: f64, sigma_x: f64, sigma_y: f64, sigma_t: f64) -> Result<Self> {
        let b = Self { eps_space, eps_time, sigma_x, sigma_y, sigma_t, weight_kernel: KernelKind::Gaussian };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("eps_space", self.eps_space),
            ("eps_time", self.eps_time),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_t", self.sigma_t),
        ];
        for (name, v) in all {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.eps_space.is_finite() && self.eps_time.is_finite()) {
            return Err(Error::InvalidParameter("pcf bandwidths must be finite".into()));
        }
        Ok(())
    }

    /// Pair correlation bandwidths by [`bandwidth_plugin`] on pairwise
    /// distances and lags. Local weighting bandwidths are the coordinate
    /// standard deviations: the plug-in rule shrinks like n^(-1/5) and at
    /// n ~ 1000 leaves each point with too few neighbours for a stable
    /// curve fit.
    pub fn auto(p: &PointPattern) -> Result<Self> {
        let (eps_space, eps_time) = pcf_bandwidths(p)?;
        let spread = |f: fn(&Point) -> f64, name: &str| -> Result<f64> {
            let v: Vec<f64> = p.points().iter().map(f).collect();
            let s = sample_sd(&v);
            if s > 0.0 && s.is_finite() {
                Ok(s)
            } else {
                Err(Error::DegenerateSample(format!("{name} coordinates have no spread")))
            }
        };
        Self::new(eps_space, eps_time, spread(|q| q.x, "x")?, spread(|q| q.y, "y")?, spread(|q| q.t, "t")?)
    }

    pub fn with_weight_kernel(mut self, kind: KernelKind) -> Self {
        self.weight_kernel = kind;
        self
    }

    /// Same pcf bandwidths with infinite local-weighting bandwidths, under
    /// which every point receives the same weight.
    pub fn flat(self) -> Self {
        Self { sigma_x: f64::INFINITY, sigma_y: f64::INFINITY, sigma_t: f64::INFINITY, ..self }
    }

    pub fn with_local(mut self, sigma_x: f64, sigma_y: f64, sigma_t: f64) -> Self {
        self.sigma_x = sigma_x;
        self.sigma_y = sigma_y;
        self.sigma_t = sigma_t;
        self
    }
}

/// Kernel factor for one coordinate. Infinite bandwidths give a constant 1,
/// the flat-weight limit.
#[inline]
fn weight_factor(kind: KernelKind, b: f64, d: f64) -> f64 {
    if b.is_infinite() {
        1.0
    } else {
        kernel_eval(kind, b, d)
    }
}

/// `w(dx; sigma_x) * w(dy; sigma_y) * w(dt; sigma_t)`.
#[inline]
pub fn product_weight(b: &BandwidthSet, dx: f64, dy: f64, dt: f64) -> f64 {
    let k = b.weight_kernel;
    weight_factor(k, b.sigma_x, dx) * weight_factor(k, b.sigma_y, dy) * weight_factor(k, b.sigma_t, dt)
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
}

/// Linearly interpolated quantile of an ascending, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Normal-scale rule `1.06 * min(sd, IQR / 1.34) * m^(-1/5)`.
pub fn bandwidth_plugin(samples: &[f64]) -> Result<f64> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bandwidth sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let distinct = sorted.windows(2).filter(|w| w[1] > w[0]).count() + usize::from(!sorted.is_empty());
    if distinct < 3 {
        return Err(Error::DegenerateSample(format!(
            "{distinct} distinct value(s) among {} samples; need at least 3",
            samples.len()
        )));
    }
    let sd = sample_sd(&sorted);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(1.06 * spread * (sorted.len() as f64).powf(-0.2))
}

/// Plug-in bandwidths for the pair correlation kernels, computed from all
/// pairwise spatial distances and absolute time lags.
pub fn pcf_bandwidths(p: &PointPattern) -> Result<(f64, f64)> {
    let n = p.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, n });
    }
    let pts = p.points();
    let mut ds = Vec::with_capacity(n * (n - 1) / 2);
    let mut dt = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            ds.push(pts[i].spatial_distance(&pts[j]));
            dt.push(pts[i].time_lag(&pts[j]));
        }
    }
    Ok((bandwidth_plugin(&ds)?, bandwidth_plugin(&dt)?))
}

/// `sigma_j = max(eps_floor, distance from j to its n_p-th nearest other point)`.
pub fn bandwidth_variable(p: &PointPattern, n_p: usize, eps_floor: f64) -> Result<Vec<f64>> {
    if n_p == 0 || n_p >= p.len() {
        return Err(Error::InsufficientNeighbors { k: n_p, available: p.len().saturating_sub(1) });
    }
    if !(eps_floor > 0.0) {
        return Err(Error::InvalidParameter(format!("eps_floor = {eps_floor} must be > 0")));
    }
    (0..p.len()).map(|j| Ok(kth_nearest_distance(p, j, n_p, NeighborMetric::Spatial)?.max(eps_floor))).collect()
}
