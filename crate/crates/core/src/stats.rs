//! Second-order summary statistics on an `(r, h)` lag grid: the local
//! (per-point) pair correlation functions, their global mean, kernel-weighted
//! averages of the local functions, and the inhomogeneous K-function.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EdgeCorrection, PointPattern};
use crate::kernels::{kernel_eval, product_weight, BandwidthSet, KernelKind};

/// Default number of lags per axis.
pub const DEFAULT_LAGS: usize = 15;
/// Default `r_max` and `h_max` as a fraction of the largest observable distances.
pub const DEFAULT_LAG_FRACTION: f64 = 0.25;

/// Evenly spaced positive spatial and temporal lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagGrid {
    r_values: Vec<f64>,
    h_values: Vec<f64>,
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} axis is empty")));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidGrid(format!("{name} lags must be finite and > 0")));
    }
    if v.len() > 1 {
        let step = v[1] - v[0];
        for w in v.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) || (d - step).abs() > 1e-9 * step.abs().max(v[v.len() - 1]) {
                return Err(Error::InvalidGrid(format!("{name} lags must be increasing and evenly spaced")));
            }
        }
    }
    Ok(())
}

impl LagGrid {
    pub fn from_values(r_values: Vec<f64>, h_values: Vec<f64>) -> Result<Self> {
        check_axis("r", &r_values)?;
        check_axis("h", &h_values)?;
        Ok(Self { r_values, h_values })
    }

    /// `nr` lags `r_max / nr, 2 r_max / nr, ..., r_max`, likewise in time.
    pub fn evenly_spaced(r_max: f64, h_max: f64, nr: usize, nh: usize) -> Result<Self> {
        if nr == 0 || nh == 0 {
            return Err(Error::InvalidGrid("need at least one lag per axis".into()));
        }
        let r = (1..=nr).map(|k| r_max * k as f64 / nr as f64).collect();
        let h = (1..=nh).map(|k| h_max * k as f64 / nh as f64).collect();
        Self::from_values(r, h)
    }

    /// 15 x 15 lags up to a quarter of the window diagonal and duration.
    pub fn default_for(window: &crate::geometry::SpaceTimeWindow) -> Self {
        Self::evenly_spaced(
            DEFAULT_LAG_FRACTION * window.max_spatial_distance(),
            DEFAULT_LAG_FRACTION * window.max_temporal_distance(),
            DEFAULT_LAGS,
            DEFAULT_LAGS,
        )
        .expect("window lengths are positive")
    }

    pub fn r_values(&self) -> &[f64] {
        &self.r_values
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    pub fn nr(&self) -> usize {
        self.r_values.len()
    }

    pub fn nh(&self) -> usize {
        self.h_values.len()
    }

    pub fn r_max(&self) -> f64 {
        *self.r_values.last().expect("non-empty")
    }

    pub fn h_max(&self) -> f64 {
        *self.h_values.last().expect("non-empty")
    }

    /// Number of `(r, h)` cells.
    pub fn len(&self) -> usize {
        self.nr() * self.nh()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in row-major `(r, h)` order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.r_values.iter().flat_map(move |&r| self.h_values.iter().map(move |&h| (r, h)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    GlobalPcf,
    LocalPcfStack,
    WeightedAvgPcf { target: usize },
    KInhom,
}

/// One or more `(r, h)` surfaces. Stacks hold one layer per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStatistic {
    pub grid: LagGrid,
    pub kind: StatisticKind,
    pub layers: usize,
    /// Layer-major, then row-major `(r, h)`.
    pub values: Vec<f64>,
}

impl SummaryStatistic {
    pub fn single(grid: LagGrid, kind: StatisticKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a grid of {} cells", values.len(), grid.len())));
        }
        Ok(Self { grid, kind, layers: 1, values })
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        let g = self.grid.len();
        &self.values[i * g..(i + 1) * g]
    }

    pub fn surface(&self) -> &[f64] {
        self.layer(0)
    }

    pub fn value(&self, layer: usize, ir: usize, ih: usize) -> f64 {
        self.values[(layer * self.grid.nr() + ir) * self.grid.nh() + ih]
    }
}

fn check_intensity(p: &PointPattern, intensity: &[f64]) -> Result<()> {
    if intensity.len() != p.len() {
        return Err(Error::ShapeMismatch(format!("{} intensities for {} points", intensity.len(), p.len())));
    }
    for (index, &value) in intensity.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveIntensity { index, value });
        }
    }
    Ok(())
}

/// Local pair correlation functions, one layer per point:
///
/// `g_i(r,h) = n / (4 pi r |W x T|) * sum_{j != i} k_eps(d_ij - r) k_delta(|t_i - t_j| - h) w_ij / (lambda_i lambda_j)`
///
/// with Epanechnikov kernels and edge-correction weight `w_ij`. Their mean
/// over `i` is the usual global estimator.
pub fn pcf_local_all(
    p: &PointPattern,
    intensity: &[f64],
    bw: &BandwidthSet,
    grid: &LagGrid,
    correction: EdgeCorrection,
) -> Result<SummaryStatistic> {
    let n = p.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, n });
    }
    check_intensity(p, intensity)?;
    bw.validate()?;
    let (nr, nh, g) = (grid.nr(), grid.nh(), grid.len());
    let (eps, del) = (bw.eps_space, bw.eps_time);
    let r_cut = grid.r_max() + eps;
    let h_cut = grid.h_max() + del;
    let pts = p.points();
    let window = p.window();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pts[a].t.total_cmp(&pts[b].t));

    let mut values = vec![0.0; n * g];
    let mut kr = vec![0.0; nr];
    let mut kh = vec![0.0; nh];
    for a in 0..n {
        let i = order[a];
        for &j in &order[a + 1..] {
            let lag = pts[j].t - pts[i].t;
            if lag >= h_cut {
                break;
            }
            let d = pts[i].spatial_distance(&pts[j]);
            if d >= r_cut {
                continue;
            }
            let mut any_r = false;
            for (k, &r) in grid.r_values().iter().enumerate() {
                kr[k] = kernel_eval(KernelKind::Epanechnikov, eps, d - r);
                any_r |= kr[k] > 0.0;
            }
            if !any_r {
                continue;
            }
            let mut any_h = false;
            for (k, &h) in grid.h_values().iter().enumerate() {
                kh[k] = kernel_eval(KernelKind::Epanechnikov, del, lag - h);
                any_h |= kh[k] > 0.0;
            }
            if !any_h {
                continue;
            }
            let w = correction.weight(window, &pts[i], &pts[j])? / (intensity[i] * intensity[j]);
            for ir in 0..nr {
                if kr[ir] == 0.0 {
                    continue;
                }
                let base = kr[ir] * w;
                for ih in 0..nh {
                    if kh[ih] == 0.0 {
                        continue;
                    }
                    let c = base * kh[ih];
                    values[i * g + ir * nh + ih] += c;
                    values[j * g + ir * nh + ih] += c;
                }
            }
        }
    }

    let scale = n as f64 / (4.0 * PI * window.volume());
    for layer in values.chunks_mut(g) {
        for (ir, &r) in grid.r_values().iter().enumerate() {
            for v in &mut layer[ir * nh..(ir + 1) * nh] {
                *v *= scale / r;
            }
        }
    }
    Ok(SummaryStatistic { grid: grid.clone(), kind: StatisticKind::LocalPcfStack, layers: n, values })
}

/// Unweighted mean of the local stack. Uses the same arithmetic as
/// [`lista_weighted_average`] with equal weights, so flat local weights
/// reproduce it bit for bit.
pub fn pcf_mean(stack: &SummaryStatistic) -> SummaryStatistic {
    let values = weighted_layer_average(stack, &vec![1.0; stack.layers]);
    SummaryStatistic { grid: stack.grid.clone(), kind: StatisticKind::GlobalPcf, layers: 1, values }
}

/// Global pair correlation function, the mean of [`pcf_local_all`].
pub fn pcf_global(
    p: &PointPattern,
    intensity: &[f64],
    bw: &BandwidthSet,
    grid: &LagGrid,
    correction: EdgeCorrection,
) -> Result<SummaryStatistic> {
    Ok(pcf_mean(&pcf_local_all(p, intensity, bw, grid, correction)?))
}

/// Local weights `w_ij` for one target point over every point `j`, including itself.
pub fn lista_weights(p: &PointPattern, bw: &BandwidthSet, target: usize) -> Result<Vec<f64>> {
    let c = *p.get(target)?;
    let mut w: Vec<f64> = p.points().iter().map(|q| product_weight(bw, c.x - q.x, c.y - q.y, c.t - q.t)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        warn!("all local weights vanish for point {target}; using its own local function only");
        w.iter_mut().for_each(|v| *v = 0.0);
        w[target] = 1.0;
    }
    Ok(w)
}

fn weighted_layer_average(stack: &SummaryStatistic, weights: &[f64]) -> Vec<f64> {
    let g = stack.grid.len();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; g];
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(stack.layer(j)) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// Kernel-weighted average of the local functions around `target`:
/// `sum_j g_j w_ij / sum_j w_ij`.
pub fn lista_weighted_average(
    stack: &SummaryStatistic,
    p: &PointPattern,
    bw: &BandwidthSet,
    target: usize,
) -> Result<SummaryStatistic> {
    if stack.kind != StatisticKind::LocalPcfStack || stack.layers != p.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected a local stack with {} layers, got {:?} with {}",
            p.len(),
            stack.kind,
            stack.layers
        )));
    }
    let w = lista_weights(p, bw, target)?;
    Ok(SummaryStatistic {
        grid: stack.grid.clone(),
        kind: StatisticKind::WeightedAvgPcf { target },
        layers: 1,
        values: weighted_layer_average(stack, &w),
    })
}

/// Inhomogeneous K-function
/// `K(r,h) = |W||T| / (n(n-1)) * sum_i sum_{j>i} 1{d_ij <= r, |t_i - t_j| <= h} / (lambda_i lambda_j)`.
pub fn k_inhom(p: &PointPattern, intensity: &[f64], grid: &LagGrid) -> Result<SummaryStatistic> {
    let n = p.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, n });
    }
    check_intensity(p, intensity)?;
    let (nr, nh) = (grid.nr(), grid.nh());
    let (r_max, h_max) = (grid.r_max(), grid.h_max());
    let pts = p.points();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pts[a].t.total_cmp(&pts[b].t));

    // Each pair lands in the first cell that counts it; a 2-D prefix sum then
    // spreads it over every larger (r, h).
    let mut inc = vec![0.0; nr * nh];
    for a in 0..n {
        let i = order[a];
        for &j in &order[a + 1..] {
            let lag = pts[j].t - pts[i].t;
            if lag > h_max {
                break;
            }
            let d = pts[i].spatial_distance(&pts[j]);
            if d > r_max {
                continue;
            }
            let ir = grid.r_values().partition_point(|&r| r < d);
            let ih = grid.h_values().partition_point(|&h| h < lag);
            inc[ir * nh + ih] += 1.0 / (intensity[i] * intensity[j]);
        }
    }
    for ir in 0..nr {
        for ih in 1..nh {
            inc[ir * nh + ih] += inc[ir * nh + ih - 1];
        }
    }
    for ir in 1..nr {
        for ih in 0..nh {
            inc[ir * nh + ih] += inc[(ir - 1) * nh + ih];
        }
    }
    let scale = p.window().volume() / (n as f64 * (n as f64 - 1.0));
    inc.iter_mut().for_each(|v| *v *= scale);
    SummaryStatistic::single(grid.clone(), StatisticKind::KInhom, inc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{translation_weight, Point, SpaceTimeWindow};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy() -> (PointPattern, BandwidthSet, LagGrid) {
        let w = SpaceTimeWindow::unit_square(10.0).unwrap();
        let p = PointPattern::new(vec![Point::new(0.2, 0.3, 2.0), Point::new(0.3, 0.3, 3.0)], w).unwrap();
        let bw = BandwidthSet::new(0.05, 1.5, 0.1, 0.1, 1.0).unwrap();
        let grid = LagGrid::from_values(vec![0.08, 0.12], vec![1.0, 2.0]).unwrap();
        (p, bw, grid)
    }

    #[test]
    fn two_point_hand_oracle() {
        let (p, bw, grid) = toy();
        let lam = [2.0, 4.0];
        let stack = pcf_local_all(&p, &lam, &bw, &grid, EdgeCorrection::Translation).unwrap();
        // d = 0.1, lag = 1, translation weight = 1/(0.9 * 1) * 10/9
        let omega = 1.0 / 0.9 * (10.0 / 9.0);
        assert_relative_eq!(translation_weight(p.window(), 0.1, 0.0, 1.0).unwrap(), omega, max_relative = 1e-14);
        let epan = |b: f64, x: f64| if (x / b).abs() < 1.0 { 0.75 / b * (1.0 - (x / b).powi(2)) } else { 0.0 };
        for (ir, &r) in [0.08, 0.12].iter().enumerate() {
            for (ih, &h) in [1.0, 2.0].iter().enumerate() {
                let k = epan(0.05, 0.1 - r) * epan(1.5, 1.0 - h);
                let expected = 2.0 / (4.0 * PI * r * 10.0) * k * omega / 8.0;
                assert_relative_eq!(stack.value(0, ir, ih), expected, max_relative = 1e-12);
                assert_relative_eq!(stack.value(1, ir, ih), expected, max_relative = 1e-12);
            }
        }
        let global = pcf_mean(&stack);
        assert_eq!(global.kind, StatisticKind::GlobalPcf);
        assert_relative_eq!(global.values[0], stack.value(0, 0, 0), max_relative = 1e-15);
    }

    #[test]
    fn pcf_errors() {
        let (p, bw, grid) = toy();
        assert!(matches!(
            pcf_local_all(&p, &[1.0, 0.0], &bw, &grid, EdgeCorrection::Translation),
            Err(Error::NonPositiveIntensity { index: 1, .. })
        ));
        assert!(LagGrid::from_values(vec![0.0, 0.1], vec![1.0]).is_err());
        let single = p.filtered(|q| q.t < 2.5);
        assert!(pcf_local_all(&single, &[1.0], &bw, &grid, EdgeCorrection::Translation).is_err());
    }

    #[test]
    fn default_grid_layout() {
        let w = SpaceTimeWindow::unit_square(50.0).unwrap();
        let g = LagGrid::default_for(&w);
        assert_eq!((g.nr(), g.nh()), (15, 15));
        assert_relative_eq!(g.r_max(), 0.25 * 2f64.sqrt());
        assert_relative_eq!(g.h_max(), 12.5);
        assert_relative_eq!(g.r_values()[0], g.r_max() / 15.0);
    }

    #[test]
    fn weighted_average_three_points() {
        let w = SpaceTimeWindow::unit_square(10.0).unwrap();
        let p =
            PointPattern::new(vec![Point::new(0.1, 0.1, 1.0), Point::new(0.2, 0.1, 1.0), Point::new(0.1, 0.4, 3.0)], w)
                .unwrap();
        let grid = LagGrid::from_values(vec![0.1], vec![1.0]).unwrap();
        let stack = SummaryStatistic {
            grid: grid.clone(),
            kind: StatisticKind::LocalPcfStack,
            layers: 3,
            values: vec![1.0, 2.0, 4.0],
        };
        let bw = BandwidthSet::new(0.05, 1.0, 0.1, 0.2, 2.0).unwrap();
        // Gaussian weights relative to the mode of each factor
        let w1 = (-0.5f64).exp();
        let w2 = (-0.5 * (0.3f64 / 0.2).powi(2)).exp() * (-0.5f64 * (2.0f64 / 2.0).powi(2)).exp();
        let expected = (1.0 + 2.0 * w1 + 4.0 * w2) / (1.0 + w1 + w2);
        let avg = lista_weighted_average(&stack, &p, &bw, 0).unwrap();
        assert_relative_eq!(avg.values[0], expected, max_relative = 1e-12);
        assert!(avg.values[0] > 1.0 && avg.values[0] < 4.0);

        let flat = lista_weighted_average(&stack, &p, &bw.flat(), 2).unwrap();
        assert_relative_eq!(flat.values[0], 7.0 / 3.0, max_relative = 1e-14);
        let narrow = BandwidthSet::new(0.05, 1.0, 1e-6, 1e-6, 1e-6).unwrap();
        assert_relative_eq!(lista_weighted_average(&stack, &p, &narrow, 1).unwrap().values[0], 2.0);
    }

    #[test]
    fn compact_weights_fall_back_to_self() {
        let w = SpaceTimeWindow::unit_square(10.0).unwrap();
        let p = PointPattern::new(vec![Point::new(0.1, 0.1, 1.0), Point::new(0.9, 0.9, 9.0)], w).unwrap();
        let grid = LagGrid::from_values(vec![0.1], vec![1.0]).unwrap();
        let stack = SummaryStatistic { grid, kind: StatisticKind::LocalPcfStack, layers: 2, values: vec![3.0, 5.0] };
        let bw = BandwidthSet::new(0.05, 1.0, 1e-320, 0.1, 0.1).unwrap().with_weight_kernel(KernelKind::Box);
        assert_eq!(lista_weighted_average(&stack, &p, &bw, 1).unwrap().values[0], 5.0);
    }

    #[test]
    fn k_limits() {
        let w = SpaceTimeWindow::unit_square(10.0).unwrap();
        let p =
            PointPattern::new(vec![Point::new(0.1, 0.1, 1.0), Point::new(0.4, 0.5, 2.0), Point::new(0.9, 0.2, 7.0)], w)
                .unwrap();
        let lam = [1.0, 2.0, 4.0];
        let small = LagGrid::from_values(vec![0.1], vec![0.5]).unwrap();
        assert_eq!(k_inhom(&p, &lam, &small).unwrap().values, vec![0.0]);
        let big = LagGrid::from_values(vec![1.0, 2.0], vec![10.0]).unwrap();
        let k = k_inhom(&p, &lam, &big).unwrap();
        let expected = 10.0 / 6.0 * (1.0 / 2.0 + 1.0 / 4.0 + 1.0 / 8.0);
        assert_relative_eq!(k.values[1], expected, max_relative = 1e-14);
        assert!(k_inhom(&p.filtered(|q| q.t < 1.5), &[1.0], &big).is_err());
    }

    #[test]
    fn k_intensity_doubling_quarters() {
        let w = SpaceTimeWindow::unit_square(10.0).unwrap();
        let p = PointPattern::new(
            (0..20).map(|i| Point::new((i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0, i as f64 * 0.45)).collect(),
            w,
        )
        .unwrap();
        let grid = LagGrid::evenly_spaced(0.4, 4.0, 5, 4).unwrap();
        let lam: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * 0.1).collect();
        let lam2: Vec<f64> = lam.iter().map(|v| 2.0 * v).collect();
        let a = k_inhom(&p, &lam, &grid).unwrap();
        let b = k_inhom(&p, &lam2, &grid).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(*x, 4.0 * y, max_relative = 1e-13);
        }
    }

    fn arb_pattern() -> impl Strategy<Value = PointPattern> {
        prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.0..10.0f64), 3..25).prop_filter_map("distinct", |v| {
            let w = SpaceTimeWindow::unit_square(10.0).unwrap();
            PointPattern::new(v.into_iter().map(|(x, y, t)| Point::new(x, y, t)).collect(), w).ok()
        })
    }

    proptest! {
        #[test]
        fn stack_permutation_invariant(p in arb_pattern(), seed in 0u64..1000) {
            let n = p.len();
            let lam: Vec<f64> = (0..n).map(|i| 5.0 + ((i as u64 * 7 + seed) % 5) as f64).collect();
            let bw = BandwidthSet::new(0.08, 1.2, 0.2, 0.2, 2.0).unwrap();
            let grid = LagGrid::evenly_spaced(0.3, 3.0, 4, 3).unwrap();
            let order: Vec<usize> = (0..n).rev().collect();
            let q = p.permuted(&order);
            let lam_q: Vec<f64> = order.iter().map(|&i| lam[i]).collect();
            let a = pcf_local_all(&p, &lam, &bw, &grid, EdgeCorrection::Translation).unwrap();
            let b = pcf_local_all(&q, &lam_q, &bw, &grid, EdgeCorrection::Translation).unwrap();
            for (pos, &i) in order.iter().enumerate() {
                for (x, y) in a.layer(i).iter().zip(b.layer(pos)) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
            let (ga, gb) = (pcf_mean(&a), pcf_mean(&b));
            for (x, y) in ga.values.iter().zip(&gb.values) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn weighted_average_is_convex(p in arb_pattern(), t in 0usize..3) {
            let n = p.len();
            let lam = vec![n as f64 / 10.0; n];
            let bw = BandwidthSet::new(0.1, 1.5, 0.3, 0.3, 3.0).unwrap();
            let grid = LagGrid::evenly_spaced(0.3, 3.0, 4, 3).unwrap();
            let stack = pcf_local_all(&p, &lam, &bw, &grid, EdgeCorrection::Translation).unwrap();
            let avg = lista_weighted_average(&stack, &p, &bw, t).unwrap();
            for c in 0..grid.len() {
                let lo = (0..n).map(|j| stack.layer(j)[c]).fold(f64::INFINITY, f64::min);
                let hi = (0..n).map(|j| stack.layer(j)[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(avg.values[c] >= lo - 1e-12 * hi.abs().max(1.0));
                prop_assert!(avg.values[c] <= hi + 1e-12 * hi.abs().max(1.0));
            }
        }

        #[test]
        fn k_monotone(p in arb_pattern()) {
            let lam = vec![2.0; p.len()];
            let grid = LagGrid::evenly_spaced(0.8, 8.0, 6, 5).unwrap();
            let k = k_inhom(&p, &lam, &grid).unwrap();
            for ir in 0..6 {
                for ih in 0..5 {
                    if ir > 0 { prop_assert!(k.value(0, ir, ih) >= k.value(0, ir - 1, ih)); }
                    if ih > 0 { prop_assert!(k.value(0, ir, ih) >= k.value(0, ir, ih - 1)); }
                }
            }
        }
    }
}
