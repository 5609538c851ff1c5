//! Space-time windows, point patterns and the pairwise geometry shared by
//! every estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` with `hi > lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidWindow(format!("interval [{lo}, {hi}] must be finite with positive length")));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// A rectangular observation region `W x T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeWindow {
    pub x: Interval,
    pub y: Interval,
    pub t: Interval,
}

impl SpaceTimeWindow {
    pub fn new(x: (f64, f64), y: (f64, f64), t: (f64, f64)) -> Result<Self> {
        Ok(Self { x: Interval::new(x.0, x.1)?, y: Interval::new(y.0, y.1)?, t: Interval::new(t.0, t.1)? })
    }

    /// `[0,1]^2 x [0, t_len]`, the layout used by the simulation scenarios.
    pub fn unit_square(t_len: f64) -> Result<Self> {
        Self::new((0.0, 1.0), (0.0, 1.0), (0.0, t_len))
    }

    /// Bounding box of a set of points. Errors when an axis is degenerate.
    pub fn bounding_box(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidWindow("cannot infer a window from no points".into()));
        }
        let fold = |f: fn(&Point) -> f64| {
            points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        Self::new(fold(|p| p.x), fold(|p| p.y), fold(|p| p.t))
    }

    pub fn area(&self) -> f64 {
        self.x.length() * self.y.length()
    }

    pub fn duration(&self) -> f64 {
        self.t.length()
    }

    /// `|W| * |T|`.
    pub fn volume(&self) -> f64 {
        self.area() * self.duration()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.x.contains(p.x) && self.y.contains(p.y) && self.t.contains(p.t)
    }

    /// Length of the spatial diagonal, the largest observable spatial distance.
    pub fn max_spatial_distance(&self) -> f64 {
        self.x.length().hypot(self.y.length())
    }

    pub fn max_temporal_distance(&self) -> f64 {
        self.t.length()
    }
}

/// An event at location `(x, y)` and time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    pub fn spatial_distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn time_lag(&self, other: &Point) -> f64 {
        (self.t - other.t).abs()
    }
}

/// A finite set of distinct events inside a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<Point>,
    window: SpaceTimeWindow,
}

impl PointPattern {
    /// Validates that every point is inside the (closed) window and that no
    /// two points coincide.
    pub fn new(points: Vec<Point>, window: SpaceTimeWindow) -> Result<Self> {
        for (index, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()) || !window.contains(p) {
                return Err(Error::PointOutsideWindow { index, x: p.x, y: p.y, t: p.t });
            }
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let key = |i: usize| (points[i].x, points[i].y, points[i].t);
        order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite coordinates"));
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::DuplicatePoint { first, second });
            }
        }
        Ok(Self { points, window })
    }

    pub fn empty(window: SpaceTimeWindow) -> Self {
        Self { points: Vec::new(), window }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn window(&self) -> &SpaceTimeWindow {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<&Point> {
        self.points.get(i).ok_or(Error::IndexOutOfRange { index: i, n: self.points.len() })
    }

    /// Returns a copy with the points reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { points: order.iter().map(|&i| self.points[i]).collect(), window: self.window }
    }

    /// Points strictly selected by `keep`, preserving order.
    pub fn filtered(&self, keep: impl Fn(&Point) -> bool) -> Self {
        Self { points: self.points.iter().copied().filter(|p| keep(p)).collect(), window: self.window }
    }

    /// `n / |W x T|`.
    pub fn constant_intensity(&self) -> f64 {
        self.points.len() as f64 / self.window.volume()
    }
}

/// The cylinder `b((u,t), r, h)` of radius `r` and height `2h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylindricalNeighborhood {
    pub center: Point,
    pub radius: f64,
    pub half_height: f64,
}

impl CylindricalNeighborhood {
    pub fn new(center: Point, radius: f64, half_height: f64) -> Result<Self> {
        if !(radius >= 0.0 && half_height >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cylinder radius {radius} and half-height {half_height} must be non-negative"
            )));
        }
        Ok(Self { center, radius, half_height })
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.spatial_distance(p) <= self.radius && self.center.time_lag(p) <= self.half_height
    }

    pub fn count(&self, pattern: &PointPattern) -> usize {
        pattern.points().iter().filter(|p| self.contains(p)).count()
    }
}

/// Dense symmetric n x n matrices of spatial distances and absolute time lags.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistances {
    pub n: usize,
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

impl PairwiseDistances {
    pub fn spatial(&self, i: usize, j: usize) -> f64 {
        self.spatial[i * self.n + j]
    }

    pub fn temporal(&self, i: usize, j: usize) -> f64 {
        self.temporal[i * self.n + j]
    }
}

pub fn pairwise_distances(p: &PointPattern) -> PairwiseDistances {
    let n = p.len();
    let pts = p.points();
    let mut spatial = vec![0.0; n * n];
    let mut temporal = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pts[i].spatial_distance(&pts[j]);
            let l = pts[i].time_lag(&pts[j]);
            spatial[i * n + j] = d;
            spatial[j * n + i] = d;
            temporal[i * n + j] = l;
            temporal[j * n + i] = l;
        }
    }
    PairwiseDistances { n, spatial, temporal }
}

/// Edge correction applied to each pair's contribution in the second-order
/// estimators. The returned weight multiplies the contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCorrection {
    /// `|W| / |W ∩ (W + du)|` times `|T| / |T ∩ (T + dt)|`.
    #[default]
    Translation,
    /// Every pair weighted 1.
    None,
}

impl EdgeCorrection {
    pub fn weight(&self, window: &SpaceTimeWindow, a: &Point, b: &Point) -> Result<f64> {
        match self {
            EdgeCorrection::None => Ok(1.0),
            EdgeCorrection::Translation => translation_weight(window, a.x - b.x, a.y - b.y, a.t - b.t),
        }
    }
}

/// Translation edge-correction weight for a displacement `(dx, dy)` and lag `dt`.
pub fn translation_weight(window: &SpaceTimeWindow, dx: f64, dy: f64, dt: f64) -> Result<f64> {
    let (lx, ly, lt) = (window.x.length(), window.y.length(), window.t.length());
    let ox = lx - dx.abs();
    let oy = ly - dy.abs();
    let ot = lt - dt.abs();
    if ox <= 0.0 || oy <= 0.0 || ot <= 0.0 {
        return Err(Error::DisplacementTooLarge { dx, dy, dt });
    }
    Ok((lx * ly) / (ox * oy) * (lt / ot))
}

pub fn translation_correction(p: &PointPattern, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidParameter("translation correction needs i != j".into()));
    }
    let a = p.get(i)?;
    let b = p.get(j)?;
    EdgeCorrection::Translation.weight(p.window(), a, b)
}

/// Distance used when ranking neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NeighborMetric {
    /// Euclidean distance in the plane, ignoring time.
    #[default]
    Spatial,
    /// `max(spatial distance, time_scale * |time lag|)`: the radius of the
    /// smallest cylinder `b(u, t, r, r / time_scale)` holding the neighbor.
    Cylindrical { time_scale: f64 },
}

impl NeighborMetric {
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        match *self {
            NeighborMetric::Spatial => a.spatial_distance(b),
            NeighborMetric::Cylindrical { time_scale } => a.spatial_distance(b).max(time_scale * a.time_lag(b)),
        }
    }
}

/// k-th smallest distance from point `i` to the other points of the pattern.
pub fn kth_nearest_distance(p: &PointPattern, i: usize, k: usize, metric: NeighborMetric) -> Result<f64> {
    let center = *p.get(i)?;
    let available = p.len() - 1;
    if k == 0 || k > available {
        return Err(Error::InsufficientNeighbors { k, available });
    }
    let mut d: Vec<f64> =
        p.points().iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| metric.distance(&center, q)).collect();
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    Ok(*kth)
}
