//! Nelder-Mead simplex minimization over an unconstrained vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Offset added along each axis to build the initial simplex.
    pub initial_step: f64,
    /// Stop when every vertex is within this distance of the best one.
    pub diameter_tol: f64,
    /// Stop when the objective values of the vertices differ by less than this.
    pub spread_tol: f64,
    pub max_evals: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { initial_step: 0.25, diameter_tol: 1e-6, spread_tol: 1e-10, max_evals: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Non-finite objective values compare as `+inf`, so the simplex moves away
/// from them.
fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub fn minimize_simplex<F>(mut f: F, start: &[f64], opts: &SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let f0 = f(start);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("objective at the starting point is {f0}")));
    }
    let mut evals = 1;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), f0)];
    for k in 0..dim {
        let mut step = opts.initial_step;
        let mut vertex = start.to_vec();
        let mut value = f64::INFINITY;
        // shrink the initial offset until the vertex is feasible
        for _ in 0..30 {
            vertex[k] = start[k] + step;
            value = eval(&vertex, &mut evals);
            if value.is_finite() {
                break;
            }
            step *= SHRINK;
        }
        simplex.push((vertex, value));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let worst_value = simplex[dim].1;
        let spread = worst_value - best.1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&best.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread < opts.spread_tol) || diameter < opts.diameter_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (v, _) in &simplex[..dim] {
            centroid.iter_mut().zip(v).for_each(|(c, x)| *c += x / dim as f64);
        }
        let toward =
            |coef: f64| -> Vec<f64> { centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + coef * (c - w)).collect() };

        let reflected = toward(REFLECT);
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            let expanded = toward(EXPAND);
            let fe = eval(&expanded, &mut evals);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst_value {
            let c = toward(CONTRACT * REFLECT);
            let fc = eval(&c, &mut evals);
            (c, fc)
        } else {
            let c = toward(-CONTRACT);
            let fc = eval(&c, &mut evals);
            (c, fc)
        };
        if fc < fr.min(worst_value) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            v.iter_mut().zip(&anchor).for_each(|(x, a)| *x = a + SHRINK * (*x - a));
            *fv = eval(v, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (argmin, value) = simplex.swap_remove(0);
    Ok(SimplexResult { argmin, value, evaluations: evals, converged: converged && value.is_finite() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic() {
        let r = minimize_simplex(|x| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2), &[0.0, 0.0], &Default::default())
            .unwrap();
        assert!(r.converged);
        assert!((r.argmin[0] - 1.0).abs() < 1e-4 && (r.argmin[1] + 2.0).abs() < 1e-4, "{:?}", r.argmin);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = SimplexOptions { spread_tol: 1e-16, ..Default::default() };
        let r = minimize_simplex(f, &[-1.2, 1.0], &opts).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-3 && (r.argmin[1] - 1.0).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn constant_objective_returns_start() {
        let r = minimize_simplex(|_| 3.0, &[0.5, -0.5, 2.0], &Default::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.argmin, vec![0.5, -0.5, 2.0]);
        assert_eq!(r.value, 3.0);
    }

    #[test]
    fn avoids_infeasible_region() {
        let f = |x: &[f64]| if x[0] > 0.1 { f64::NAN } else { (x[0] + 1.0).powi(2) + x[1] * x[1] };
        let r = minimize_simplex(f, &[0.0, 0.5], &Default::default()).unwrap();
        assert!(r.converged);
        assert!((r.argmin[0] + 1.0).abs() < 1e-4);
        assert!(minimize_simplex(|_| f64::INFINITY, &[0.0], &Default::default()).is_err());
    }

    #[test]
    fn evaluation_budget() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = SimplexOptions { max_evals: 30, ..Default::default() };
        let r = minimize_simplex(f, &[-1.2, 1.0], &opts).unwrap();
        assert!(!r.converged);
        assert!(r.evaluations <= 30 + 3);
    }
}
