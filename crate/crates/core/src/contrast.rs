//! Joint and locally weighted minimum-contrast estimation of the covariance
//! parameters from pair correlation functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{pack_params, unpack_params, CovarianceModel, ModelFamily, MAX_PCF_EXPONENT};
use crate::error::{Error, Result};
use crate::geometry::{EdgeCorrection, PointPattern};
use crate::kernels::{quantile_sorted, BandwidthSet};
use crate::optim::{minimize_simplex, SimplexOptions};
use crate::stats::{lista_weights, pcf_local_all, pcf_mean, LagGrid, StatisticKind, SummaryStatistic};

/// Floor applied before taking logs of pair correlation values.
pub const LOG_FLOOR: f64 = 1e-10;

/// Transform `nu` applied to both curves before squaring their difference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Log,
}

impl Transform {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.max(LOG_FLOOR).ln(),
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(Transform::Identity),
            "log" => Ok(Transform::Log),
            _ => Err(Error::InvalidParameter(format!("unknown transform `{s}` (identity, log)"))),
        }
    }
}

/// Weight function `phi(r, h)` over the lag grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Constant,
    /// One non-negative weight per grid cell, row-major `(r, h)`.
    PerCell(Vec<f64>),
}

/// Closed search box for the parameters; the contrast is `+inf` outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub sigma2: (f64, f64),
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl SearchBox {
    /// `sigma2` in `[1e-3, 25]`, `alpha` in `[r_1 / 100, 4 r_max]`,
    /// `beta` in `[h_1 / 100, 4 h_max]`: beyond these the pair correlation
    /// over the grid no longer identifies the parameters.
    pub fn for_grid(grid: &LagGrid) -> Self {
        let (r1, h1) = (grid.r_values()[0], grid.h_values()[0]);
        Self { sigma2: (1e-3, 25.0), alpha: (r1 / 100.0, 4.0 * grid.r_max()), beta: (h1 / 100.0, 4.0 * grid.h_max()) }
    }

    pub fn contains(&self, m: &CovarianceModel) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(m.sigma2(), self.sigma2) && inside(m.alpha(), self.alpha) && inside(m.beta(), self.beta)
    }

    /// Nearest point of the box.
    pub fn clamp(&self, m: &CovarianceModel) -> CovarianceModel {
        let c = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
        let mut out = m.with_sigma2(c(m.sigma2(), self.sigma2));
        match &mut out {
            CovarianceModel::SeparableExponential(p) => {
                p.alpha = c(p.alpha, self.alpha);
                p.beta = c(p.beta, self.beta);
            }
            CovarianceModel::Gneiting(p) => {
                p.alpha = c(p.alpha, self.alpha);
                p.beta = c(p.beta, self.beta);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub grid: LagGrid,
    pub weighting: Weighting,
    pub transform: Transform,
    pub family: ModelFamily,
    /// Estimate `gamma_s` and `gamma_t` of the Gneiting family rather than
    /// holding them at 1.
    #[serde(default)]
    pub free_gammas: bool,
    pub bounds: SearchBox,
}

impl ContrastSpec {
    pub fn new(grid: LagGrid, family: ModelFamily) -> Self {
        let bounds = SearchBox::for_grid(&grid);
        Self {
            grid,
            weighting: Weighting::Constant,
            transform: Transform::Identity,
            family,
            free_gammas: false,
            bounds,
        }
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Weighting::PerCell(w) = &self.weighting {
            if w.len() != self.grid.len() {
                return Err(Error::ShapeMismatch(format!("{} weights for {} grid cells", w.len(), self.grid.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParameter("contrast weights must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    fn phi(&self, cell: usize) -> f64 {
        match &self.weighting {
            Weighting::Constant => 1.0,
            Weighting::PerCell(w) => w[cell],
        }
    }

    /// Unconstrained coordinates of the estimated parameters.
    pub fn pack(&self, m: &CovarianceModel) -> Vec<f64> {
        let v = pack_params(m);
        match (self.family, self.free_gammas) {
            (ModelFamily::Gneiting, false) => vec![v[0], v[1], v[2], v[5]],
            _ => v,
        }
    }

    pub fn unpack(&self, v: &[f64]) -> Result<CovarianceModel> {
        match (self.family, self.free_gammas) {
            // packed gamma = 0 maps to exactly 1
            (ModelFamily::Gneiting, false) if v.len() == 4 => {
                unpack_params(self.family, &[v[0], v[1], v[2], 0.0, 0.0, v[3]])
            }
            _ => unpack_params(self.family, v),
        }
    }
}

/// An empirical curve prepared for repeated contrast evaluations.
struct Target<'a> {
    spec: &'a ContrastSpec,
    lags: Vec<(f64, f64)>,
    transformed: Vec<f64>,
}

impl<'a> Target<'a> {
    fn new(spec: &'a ContrastSpec, empirical: &[f64]) -> Result<Self> {
        spec.validate()?;
        if empirical.len() != spec.grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "empirical curve has {} cells, contrast grid has {}",
                empirical.len(),
                spec.grid.len()
            )));
        }
        if let Some(v) = empirical.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("empirical pair correlation value {v}")));
        }
        Ok(Self {
            spec,
            lags: spec.grid.cells().collect(),
            transformed: empirical.iter().map(|&v| spec.transform.apply(v)).collect(),
        })
    }

    /// Mean over cells of `phi (nu[J_hat] - nu[exp C])^2`; `+inf` when the
    /// model curve overflows.
    fn value(&self, m: &CovarianceModel) -> f64 {
        let mut sum = 0.0;
        for (cell, (&(r, h), &e)) in self.lags.iter().zip(&self.transformed).enumerate() {
            let c = m.cov_unchecked(r, h);
            if !(c <= MAX_PCF_EXPONENT) {
                return f64::INFINITY;
            }
            let model = match self.spec.transform {
                Transform::Identity => c.exp(),
                Transform::Log => c.max(LOG_FLOOR.ln()),
            };
            sum += self.spec.phi(cell) * (e - model).powi(2);
        }
        sum / self.lags.len() as f64
    }

    fn objective(&self, v: &[f64]) -> f64 {
        match self.spec.unpack(v) {
            Ok(m) if self.spec.bounds.contains(&m) => self.value(&m),
            _ => f64::INFINITY,
        }
    }
}

fn check_curve(spec: &ContrastSpec, empirical: &SummaryStatistic) -> Result<()> {
    if empirical.grid != spec.grid {
        return Err(Error::ShapeMismatch("empirical statistic is on a different lag grid".into()));
    }
    if empirical.layers != 1 {
        return Err(Error::ShapeMismatch(format!("expected one surface, got {} layers", empirical.layers)));
    }
    Ok(())
}

/// Discretized contrast: the mean over grid cells of
/// `phi (nu[J_hat] - nu[J(psi)])^2` with `J(psi) = exp(C(r, h; psi))`.
pub fn contrast_value(spec: &ContrastSpec, empirical: &SummaryStatistic, params: &CovarianceModel) -> Result<f64> {
    check_curve(spec, empirical)?;
    if params.family() != spec.family {
        return Err(Error::InvalidParameter(format!(
            "parameters of family {:?} for a {:?} contrast",
            params.family(),
            spec.family
        )));
    }
    params.validate()?;
    let v = Target::new(spec, empirical.surface())?.value(params);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("model pair correlation overflows on the grid".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
    /// Restart the simplex once from each optimum to guard against collapse.
    pub polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { simplex: SimplexOptions::default(), polish: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: CovarianceModel,
    /// `None` when the start failed outright.
    pub contrast: Option<f64>,
    pub evaluations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFitResult {
    pub params: CovarianceModel,
    pub contrast: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub trace: Vec<StartTrace>,
}

/// Scale-aware starting values: `sigma2 = ln g(r_1, h_1)` clamped to
/// `[0.5, 15]`, `alpha = r_max / 5`, `beta = h_max / 5`, `delta = 1`, plus the
/// same vector scaled by 1.5 and by 0.5.
pub fn default_starts(spec: &ContrastSpec, empirical: &SummaryStatistic) -> Result<Vec<CovarianceModel>> {
    let g0 = empirical.surface()[0];
    let sigma2 = if g0 > 0.0 { g0.ln().clamp(0.5, 15.0) } else { 0.5 };
    let (alpha, beta) = (spec.grid.r_max() / 5.0, spec.grid.h_max() / 5.0);
    [1.0, 1.5, 0.5]
        .iter()
        .map(|&f| match spec.family {
            ModelFamily::SeparableExponential => CovarianceModel::separable(sigma2 * f, alpha * f, beta * f),
            ModelFamily::Gneiting => CovarianceModel::gneiting(sigma2 * f, alpha * f, beta * f, 1.0),
        })
        .collect()
}

fn run_from(target: &Target, start: &[f64], opts: &FitOptions) -> Result<(Vec<f64>, f64, usize, bool)> {
    let mut r = minimize_simplex(|v| target.objective(v), start, &opts.simplex)?;
    let mut evals = r.evaluations;
    if opts.polish {
        let again = minimize_simplex(|v| target.objective(v), &r.argmin, &opts.simplex)?;
        evals += again.evaluations;
        if again.value <= r.value {
            r = again;
        }
    }
    Ok((r.argmin, r.value, evals, r.converged))
}

/// Minimizes the contrast against a given empirical curve from every start
/// and keeps the best optimum.
pub fn fit_curve(
    spec: &ContrastSpec,
    empirical: &SummaryStatistic,
    starts: &[CovarianceModel],
    opts: &FitOptions,
) -> Result<GlobalFitResult> {
    check_curve(spec, empirical)?;
    if starts.is_empty() {
        return Err(Error::InvalidParameter("at least one starting value is required".into()));
    }
    let target = Target::new(spec, empirical.surface())?;
    let mut trace = Vec::with_capacity(starts.len());
    let mut best: Option<(CovarianceModel, f64, bool)> = None;
    let mut total = 0;
    for start in starts {
        let attempt = if start.family() != spec.family {
            Err(Error::InvalidParameter(format!("start of family {:?}", start.family())))
        } else {
            start.validate().and_then(|_| run_from(&target, &spec.pack(&spec.bounds.clamp(start)), opts))
        };
        match attempt.and_then(|(v, value, evals, conv)| Ok((spec.unpack(&v)?, value, evals, conv))) {
            Ok((m, value, evaluations, converged)) => {
                total += evaluations;
                trace.push(StartTrace { start: *start, contrast: Some(value), evaluations, converged, error: None });
                if value.is_finite() && best.as_ref().is_none_or(|b| value < b.1) {
                    best = Some((m, value, converged));
                }
            }
            Err(e) => trace.push(StartTrace {
                start: *start,
                contrast: None,
                evaluations: 0,
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((params, contrast, converged)) => {
            Ok(GlobalFitResult { params, contrast, converged, evaluations: total, trace })
        }
        None => {
            let msgs: Vec<String> = trace.iter().filter_map(|t| t.error.clone()).collect();
            Err(Error::OptimizationFailed(msgs.join("; ")))
        }
    }
}

/// Joint minimum contrast: estimates the global pair correlation function
/// once and fits the model family to it. `starts = None` uses
/// [`default_starts`].
pub fn fit_global(
    p: &PointPattern,
    intensity: &[f64],
    spec: &ContrastSpec,
    bw: &BandwidthSet,
    starts: Option<&[CovarianceModel]>,
    opts: &FitOptions,
) -> Result<GlobalFitResult> {
    let stack = pcf_local_all(p, intensity, bw, &spec.grid, EdgeCorrection::Translation)?;
    let global = pcf_mean(&stack);
    fit_with_starts(spec, &global, starts, opts)
}

fn fit_with_starts(
    spec: &ContrastSpec,
    empirical: &SummaryStatistic,
    starts: Option<&[CovarianceModel]>,
    opts: &FitOptions,
) -> Result<GlobalFitResult> {
    match starts {
        Some(s) => fit_curve(spec, empirical, s, opts),
        None => fit_curve(spec, empirical, &default_starts(spec, empirical)?, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFitResult {
    /// One parameter vector per point, in pattern order. Failed points carry
    /// the global estimate.
    pub params: Vec<CovarianceModel>,
    pub contrast: Vec<f64>,
    pub converged: Vec<bool>,
    pub failures: Vec<Option<String>>,
    pub bandwidths: BandwidthSet,
    pub global: CovarianceModel,
    pub global_contrast: f64,
}

impl LocalFitResult {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Every point at the given parameters, e.g. to simulate a global model
    /// through the patchwork construction.
    pub fn uniform(m: CovarianceModel, n: usize, bandwidths: BandwidthSet) -> Self {
        Self {
            params: vec![m; n],
            contrast: vec![0.0; n],
            converged: vec![true; n],
            failures: vec![None; n],
            bandwidths,
            global: m,
            global_contrast: 0.0,
        }
    }
}

/// Locally weighted minimum contrast. Estimates the local pair correlation
/// stack once; for each point `i` the target curve is the kernel-weighted
/// average of the local functions around `i`, and the fit is warm-started at
/// the global estimate. A point never ends worse than the global estimate
/// against its own target.
pub fn fit_local(
    p: &PointPattern,
    intensity: &[f64],
    spec: &ContrastSpec,
    bw: &BandwidthSet,
    starts: Option<&[CovarianceModel]>,
    opts: &FitOptions,
) -> Result<(GlobalFitResult, LocalFitResult)> {
    let stack = pcf_local_all(p, intensity, bw, &spec.grid, EdgeCorrection::Translation)?;
    let global = fit_with_starts(spec, &pcf_mean(&stack), starts, opts)?;
    let local = fit_local_from_stack(&stack, p, spec, bw, &global, opts)?;
    Ok((global, local))
}

/// The per-point stage of [`fit_local`] on a precomputed stack.
pub fn fit_local_from_stack(
    stack: &SummaryStatistic,
    p: &PointPattern,
    spec: &ContrastSpec,
    bw: &BandwidthSet,
    global: &GlobalFitResult,
    opts: &FitOptions,
) -> Result<LocalFitResult> {
    if stack.kind != StatisticKind::LocalPcfStack || stack.layers != p.len() || stack.grid != spec.grid {
        return Err(Error::ShapeMismatch("local stack does not match the pattern and contrast grid".into()));
    }
    spec.validate()?;
    let g = stack.grid.len();
    let warm = spec.pack(&spec.bounds.clamp(&global.params));
    let per_point: Vec<(CovarianceModel, f64, bool, Option<String>)> = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let attempt = (|| -> Result<(CovarianceModel, f64, bool)> {
                let w = lista_weights(p, bw, i)?;
                let total: f64 = w.iter().sum();
                let mut curve = vec![0.0; g];
                for (j, &wj) in w.iter().enumerate() {
                    if wj != 0.0 {
                        curve.iter_mut().zip(stack.layer(j)).for_each(|(c, v)| *c += wj * v);
                    }
                }
                curve.iter_mut().for_each(|c| *c /= total);
                let target = Target::new(spec, &curve)?;
                let at_global = target.value(&global.params);
                let (v, value, _, converged) = run_from(&target, &warm, opts)?;
                if value <= at_global {
                    Ok((spec.unpack(&v)?, value, converged))
                } else {
                    Ok((global.params, at_global, converged))
                }
            })();
            match attempt {
                Ok((m, value, conv)) => (m, value, conv, None),
                Err(e) => (global.params, f64::NAN, false, Some(e.to_string())),
            }
        })
        .collect();
    let mut out = LocalFitResult {
        params: Vec::with_capacity(p.len()),
        contrast: Vec::with_capacity(p.len()),
        converged: Vec::with_capacity(p.len()),
        failures: Vec::with_capacity(p.len()),
        bandwidths: *bw,
        global: global.params,
        global_contrast: global.contrast,
    };
    for (m, value, conv, err) in per_point {
        out.params.push(m);
        out.contrast.push(value);
        out.converged.push(conv);
        out.failures.push(err);
    }
    Ok(out)
}

/// Min, quartiles, mean and max of one parameter across points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Per-parameter summaries of a local fit: `(name, summary)` for `sigma2`,
/// `alpha`, `beta` and, for the Gneiting family, `delta`.
pub fn summarize_local(fit: &LocalFitResult) -> Vec<(&'static str, Summary)> {
    let mut cols: Vec<(&'static str, Vec<f64>)> = vec![
        ("sigma2", fit.params.iter().map(|m| m.sigma2()).collect()),
        ("alpha", fit.params.iter().map(|m| m.alpha()).collect()),
        ("beta", fit.params.iter().map(|m| m.beta()).collect()),
    ];
    if fit.global.family() == ModelFamily::Gneiting {
        cols.push(("delta", fit.params.iter().filter_map(|m| m.delta()).collect()));
    }
    cols.into_iter().filter_map(|(name, v)| Summary::of(&v).map(|s| (name, s))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::pcf_theoretical;

    fn spec(family: ModelFamily) -> ContrastSpec {
        ContrastSpec::new(LagGrid::evenly_spaced(0.25, 12.5, 15, 15).unwrap(), family)
    }

    fn theoretical(spec: &ContrastSpec, m: &CovarianceModel) -> SummaryStatistic {
        let v = spec.grid.cells().map(|(r, h)| pcf_theoretical(m, r, h).unwrap()).collect();
        SummaryStatistic::single(spec.grid.clone(), StatisticKind::GlobalPcf, v).unwrap()
    }

    #[test]
    fn perfect_fit_has_zero_contrast() {
        let s = spec(ModelFamily::SeparableExponential);
        let m = CovarianceModel::separable(5.0, 0.1, 5.0).unwrap();
        assert_eq!(contrast_value(&s, &theoretical(&s, &m), &m).unwrap(), 0.0);
    }

    #[test]
    fn csr_curve_on_two_by_two_grid() {
        let grid = LagGrid::from_values(vec![0.05, 0.1], vec![1.0, 2.0]).unwrap();
        let s = ContrastSpec::new(grid.clone(), ModelFamily::SeparableExponential);
        let ones = SummaryStatistic::single(grid, StatisticKind::GlobalPcf, vec![1.0; 4]).unwrap();
        let m = CovarianceModel::separable(5.0, 0.05, 2.0).unwrap();
        let mut hand = 0.0;
        for r in [0.05f64, 0.1] {
            for h in [1.0f64, 2.0] {
                hand += (1.0 - (5.0 * (-r / 0.05 - h / 2.0).exp()).exp()).powi(2);
            }
        }
        let v = contrast_value(&s, &ones, &m).unwrap();
        assert!((v - hand / 4.0).abs() < 1e-12 * hand);
    }

    #[test]
    fn moving_sigma2_away_increases_contrast() {
        let s = spec(ModelFamily::SeparableExponential);
        let m = CovarianceModel::separable(5.0, 0.1, 5.0).unwrap();
        let emp = theoretical(&s, &m);
        let mut last = 0.0;
        for k in 1..6 {
            let v = contrast_value(&s, &emp, &m.with_sigma2(5.0 + 0.2 * k as f64)).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(contrast_value(&s, &emp, &m.with_sigma2(4.5)).unwrap() > 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let s = spec(ModelFamily::SeparableExponential);
        let other = LagGrid::evenly_spaced(0.2, 10.0, 15, 15).unwrap();
        let emp = SummaryStatistic::single(other.clone(), StatisticKind::GlobalPcf, vec![1.0; 225]).unwrap();
        let m = CovarianceModel::separable(1.0, 0.1, 1.0).unwrap();
        assert!(matches!(contrast_value(&s, &emp, &m), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn log_transform_zero_at_truth() {
        let s = spec(ModelFamily::SeparableExponential).with_transform(Transform::Log);
        let m = CovarianceModel::separable(2.0, 0.1, 5.0).unwrap();
        assert!(contrast_value(&s, &theoretical(&s, &m), &m).unwrap() < 1e-28);
    }

    #[test]
    fn gneiting_pack_round_trip_keeps_unit_gammas() {
        let s = spec(ModelFamily::Gneiting);
        let m = CovarianceModel::gneiting(5.0, 0.05, 2.0, 1.8).unwrap();
        let v = s.pack(&m);
        assert_eq!(v.len(), 4);
        let back = s.unpack(&v).unwrap();
        if let CovarianceModel::Gneiting(g) = back {
            assert_eq!((g.gamma_s, g.gamma_t), (1.0, 1.0));
            assert!((g.delta - 1.8).abs() < 1e-12 && (g.sigma2 - 5.0).abs() < 1e-12);
        } else {
            panic!("wrong family");
        }
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.mean, s.q3, s.max), (1.0, 2.0, 3.0, 3.0, 4.0, 5.0));
        assert!(Summary::of(&[f64::NAN]).is_none());
    }
}
