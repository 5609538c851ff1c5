//! Brute-force reference implementations shared by the integration tests.

use std::f64::consts::PI;

use stlgcp::{LagGrid, PointPattern};

pub fn epan(b: f64, u: f64) -> f64 {
    if (u / b).abs() < 1.0 {
        0.75 / b * (1.0 - (u / b).powi(2))
    } else {
        0.0
    }
}

pub fn naive_local_pcf(p: &PointPattern, lam: &[f64], eps: f64, del: f64, grid: &LagGrid) -> Vec<Vec<f64>> {
    let w = p.window();
    let (lx, ly, lt) = (w.x.hi - w.x.lo, w.y.hi - w.y.lo, w.t.hi - w.t.lo);
    let pts = p.points();
    let n = pts.len();
    let mut out = Vec::new();
    for i in 0..n {
        let mut layer = Vec::new();
        for &r in grid.r_values() {
            for &h in grid.h_values() {
                let mut s = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let (dx, dy, dt) = (pts[i].x - pts[j].x, pts[i].y - pts[j].y, pts[i].t - pts[j].t);
                    let d = (dx * dx + dy * dy).sqrt();
                    let edge = lx * ly * lt / ((lx - dx.abs()) * (ly - dy.abs()) * (lt - dt.abs()));
                    s += epan(eps, d - r) * epan(del, dt.abs() - h) * edge / (lam[i] * lam[j]);
                }
                layer.push(n as f64 * s / (4.0 * PI * r * lx * ly * lt));
            }
        }
        out.push(layer);
    }
    out
}

pub fn naive_k(p: &PointPattern, lam: &[f64], grid: &LagGrid) -> Vec<f64> {
    let pts = p.points();
    let n = pts.len() as f64;
    let mut out = Vec::new();
    for &r in grid.r_values() {
        for &h in grid.h_values() {
            let mut s = 0.0;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    if pts[i].spatial_distance(&pts[j]) <= r && (pts[i].t - pts[j].t).abs() <= h {
                        s += 1.0 / (lam[i] * lam[j]);
                    }
                }
            }
            out.push(p.window().volume() / (n * (n - 1.0)) * s);
        }
    }
    out
}

/// Relative closeness at the 1e-10 level, absolute below 1.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * b.abs().max(1.0)
}
