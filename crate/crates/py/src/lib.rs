//! Python bindings. Patterns, windows, models and bandwidths are thin
//! wrappers; statistics come back as nested lists indexed `[r][h]`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stlgcp::diagnostics::DEFAULT_Q;
use stlgcp::intensity::{CoordinateCovariate, Covariates};
use stlgcp::{
    io, replicate, BandwidthSet, ContrastSpec, CovarianceModel, DiagnosticOptions, EdgeCorrection, FitOptions,
    FittedModel, Intensity, LagGrid, ModelFamily, Point, QuadratureScheme, SimulationConfig, SpaceTimeWindow,
    SummaryStatistic,
};

create_exception!(stlgcp, StlgcpError, PyValueError, "Invalid input or numerical failure.");

fn err(e: stlgcp::Error) -> PyErr {
    StlgcpError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| StlgcpError::new_err(e.to_string()))
}

#[pyclass(name = "Window", module = "stlgcp", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyWindow(pub SpaceTimeWindow);

#[pymethods]
impl PyWindow {
    #[new]
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, t0: f64, t1: f64) -> PyResult<Self> {
        SpaceTimeWindow::new((x0, x1), (y0, y1), (t0, t1)).map(Self).map_err(err)
    }

    #[staticmethod]
    fn unit_square(duration: f64) -> PyResult<Self> {
        SpaceTimeWindow::unit_square(duration).map(Self).map_err(err)
    }

    /// `(x0, x1, y0, y1, t0, t1)`.
    fn bounds(&self) -> (f64, f64, f64, f64, f64, f64) {
        let w = &self.0;
        (w.x.lo, w.x.hi, w.y.lo, w.y.hi, w.t.lo, w.t.hi)
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d, e, f) = self.bounds();
        format!("Window({a}, {b}, {c}, {d}, {e}, {f})")
    }
}

#[pyclass(name = "PointPattern", module = "stlgcp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPattern(pub stlgcp::PointPattern);

#[pymethods]
impl PyPattern {
    #[new]
    fn new(points: Vec<(f64, f64, f64)>, window: &PyWindow) -> PyResult<Self> {
        let pts = points.into_iter().map(|(x, y, t)| Point::new(x, y, t)).collect();
        stlgcp::PointPattern::new(pts, window.0).map(Self).map_err(err)
    }

    /// Reads `x,y,t` CSV; without a window the bounding box of the points is used.
    #[staticmethod]
    #[pyo3(signature = (path, window=None))]
    fn read_csv(path: PathBuf, window: Option<&PyWindow>) -> PyResult<Self> {
        io::read_pattern_csv(&path, window.map(|w| w.0)).map(Self).map_err(err)
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        io::write_pattern_csv(&path, &self.0).map_err(err)
    }

    fn points(&self) -> Vec<(f64, f64, f64)> {
        self.0.points().iter().map(|p| (p.x, p.y, p.t)).collect()
    }

    #[getter]
    fn window(&self) -> PyWindow {
        PyWindow(*self.0.window())
    }

    /// `n / |W x T|`.
    fn constant_intensity(&self) -> f64 {
        self.0.constant_intensity()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("PointPattern(n={})", self.0.len())
    }
}

#[pyclass(name = "CovarianceModel", module = "stlgcp", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyModel(pub CovarianceModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn separable(sigma2: f64, alpha: f64, beta: f64) -> PyResult<Self> {
        CovarianceModel::separable(sigma2, alpha, beta).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (sigma2, alpha, beta, delta, gamma_s=1.0, gamma_t=1.0))]
    fn gneiting(sigma2: f64, alpha: f64, beta: f64, delta: f64, gamma_s: f64, gamma_t: f64) -> PyResult<Self> {
        CovarianceModel::gneiting_full(sigma2, alpha, beta, gamma_s, gamma_t, delta).map(Self).map_err(err)
    }

    /// A catalog scenario such as `"t1-05"`.
    #[staticmethod]
    fn scenario(id: &str) -> PyResult<Self> {
        replicate::scenario(id).map(|s| Self(s.model)).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let m: CovarianceModel = serde_json::from_str(text).map_err(|e| StlgcpError::new_err(e.to_string()))?;
        m.validate().map_err(err)?;
        Ok(Self(m))
    }

    #[allow(clippy::wrong_self_convention)]
    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("models serialize")
    }

    fn covariance(&self, r: f64, h: f64) -> PyResult<f64> {
        stlgcp::covariance::cov_eval(&self.0, r, h).map_err(err)
    }

    fn pcf(&self, r: f64, h: f64) -> PyResult<f64> {
        stlgcp::pcf_theoretical(&self.0, r, h).map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        match self.0.family() {
            ModelFamily::SeparableExponential => "sep_exp",
            ModelFamily::Gneiting => "gneiting",
        }
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.0.sigma2()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta()
    }

    #[getter]
    fn delta(&self) -> Option<f64> {
        self.0.delta()
    }

    fn __repr__(&self) -> String {
        match self.0.delta() {
            None => format!("CovarianceModel.separable({}, {}, {})", self.0.sigma2(), self.0.alpha(), self.0.beta()),
            Some(d) => {
                format!("CovarianceModel.gneiting({}, {}, {}, {d})", self.0.sigma2(), self.0.alpha(), self.0.beta())
            }
        }
    }
}

#[pyclass(name = "Bandwidths", module = "stlgcp", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyBandwidths(pub BandwidthSet);

#[pymethods]
impl PyBandwidths {
    #[new]
    #[pyo3(signature = (eps_space, eps_time, sigma_x, sigma_y, sigma_t, kernel=None))]
    fn new(
        eps_space: f64,
        eps_time: f64,
        sigma_x: f64,
        sigma_y: f64,
        sigma_t: f64,
        kernel: Option<&str>,
    ) -> PyResult<Self> {
        let mut bw = BandwidthSet::new(eps_space, eps_time, sigma_x, sigma_y, sigma_t).map_err(err)?;
        if let Some(k) = kernel {
            bw = bw.with_weight_kernel(parse(k)?);
        }
        Ok(Self(bw))
    }

    /// Data-driven defaults for a pattern.
    #[staticmethod]
    fn auto(pattern: &PyPattern) -> PyResult<Self> {
        BandwidthSet::auto(&pattern.0).map(Self).map_err(err)
    }

    #[getter]
    fn eps_space(&self) -> f64 {
        self.0.eps_space
    }

    #[getter]
    fn eps_time(&self) -> f64 {
        self.0.eps_time
    }

    /// `(sigma_x, sigma_y, sigma_t)`.
    #[getter]
    fn sigmas(&self) -> (f64, f64, f64) {
        (self.0.sigma_x, self.0.sigma_y, self.0.sigma_t)
    }

    fn __repr__(&self) -> String {
        let b = &self.0;
        format!("Bandwidths({}, {}, {}, {}, {})", b.eps_space, b.eps_time, b.sigma_x, b.sigma_y, b.sigma_t)
    }
}

#[pyclass(name = "LagGrid", module = "stlgcp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyLagGrid(pub LagGrid);

#[pymethods]
impl PyLagGrid {
    #[new]
    fn new(r_max: f64, h_max: f64, nr: usize, nh: usize) -> PyResult<Self> {
        LagGrid::evenly_spaced(r_max, h_max, nr, nh).map(Self).map_err(err)
    }

    #[staticmethod]
    fn default_for(window: &PyWindow) -> Self {
        Self(LagGrid::default_for(&window.0))
    }

    #[getter]
    fn r_values(&self) -> Vec<f64> {
        self.0.r_values().to_vec()
    }

    #[getter]
    fn h_values(&self) -> Vec<f64> {
        self.0.h_values().to_vec()
    }
}

fn surface(values: &[f64], nh: usize) -> Vec<Vec<f64>> {
    values.chunks(nh).map(<[f64]>::to_vec).collect()
}

fn intensity_at_points(p: &stlgcp::PointPattern, intensity: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    match intensity {
        None => Ok(vec![p.constant_intensity(); p.len()]),
        Some(v) if v.len() == p.len() => Ok(v),
        Some(v) => Err(StlgcpError::new_err(format!("{} intensity values for {} points", v.len(), p.len()))),
    }
}

fn correction(s: &str) -> PyResult<EdgeCorrection> {
    match s {
        "translation" => Ok(EdgeCorrection::Translation),
        "none" => Ok(EdgeCorrection::None),
        o => Err(StlgcpError::new_err(format!("unknown edge correction `{o}` (translation, none)"))),
    }
}

fn local_stack(
    pattern: &PyPattern,
    grid: &PyLagGrid,
    intensity: Option<Vec<f64>>,
    bandwidths: Option<&PyBandwidths>,
    correction_name: &str,
) -> PyResult<SummaryStatistic> {
    let lam = intensity_at_points(&pattern.0, intensity)?;
    let bw = match bandwidths {
        Some(b) => b.0,
        None => BandwidthSet::auto(&pattern.0).map_err(err)?,
    };
    stlgcp::pcf_local_all(&pattern.0, &lam, &bw, &grid.0, correction(correction_name)?).map_err(err)
}

/// Mean of the local pair correlation functions, `[r][h]`.
#[pyfunction]
#[pyo3(signature = (pattern, grid, intensity=None, bandwidths=None, correction="translation"))]
fn pcf(
    py: Python<'_>,
    pattern: &PyPattern,
    grid: &PyLagGrid,
    intensity: Option<Vec<f64>>,
    bandwidths: Option<&PyBandwidths>,
    correction: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let stack = py.detach(|| local_stack(pattern, grid, intensity, bandwidths, correction))?;
    Ok(surface(stlgcp::stats::pcf_mean(&stack).surface(), grid.0.nh()))
}

/// One `[r][h]` surface per point.
#[pyfunction]
#[pyo3(signature = (pattern, grid, intensity=None, bandwidths=None, correction="translation"))]
fn pcf_local(
    py: Python<'_>,
    pattern: &PyPattern,
    grid: &PyLagGrid,
    intensity: Option<Vec<f64>>,
    bandwidths: Option<&PyBandwidths>,
    correction: &str,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let stack = py.detach(|| local_stack(pattern, grid, intensity, bandwidths, correction))?;
    Ok((0..pattern.0.len()).map(|i| surface(stack.layer(i), grid.0.nh())).collect())
}

/// Inhomogeneous K-function, `[r][h]`.
#[pyfunction]
#[pyo3(signature = (pattern, grid, intensity=None))]
fn k_inhom(pattern: &PyPattern, grid: &PyLagGrid, intensity: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let lam = intensity_at_points(&pattern.0, intensity)?;
    let k = stlgcp::k_inhom(&pattern.0, &lam, &grid.0).map_err(err)?;
    Ok(surface(k.surface(), grid.0.nh()))
}

/// Log-linear Poisson fit on coordinate terms (any of `"x"`, `"y"`, `"t"`).
/// Returns the coefficient names, estimates and the intensity at each point.
#[pyfunction]
#[pyo3(signature = (pattern, trend=None))]
fn fit_poisson<'py>(py: Python<'py>, pattern: &PyPattern, trend: Option<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let mut q = QuadratureScheme::auto(&pattern.0, None).map_err(err)?;
    if let Some(terms) = trend {
        let cov = terms
            .iter()
            .map(|t| match t.as_str() {
                "x" => Ok(CoordinateCovariate::X),
                "y" => Ok(CoordinateCovariate::Y),
                "t" => Ok(CoordinateCovariate::T),
                o => Err(StlgcpError::new_err(format!("unknown trend term `{o}` (x, y, t)"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        q = q.with_covariates(Covariates::Coordinates(cov));
    }
    let fit = stlgcp::fit_poisson(&q, None).map_err(err)?;
    let at_points: Vec<f64> = pattern.0.points().iter().map(|p| q.predict(p, &fit.theta)).collect();
    let d = PyDict::new(py);
    d.set_item("names", &fit.names)?;
    d.set_item("theta", &fit.theta)?;
    d.set_item("loglik", fit.loglik)?;
    d.set_item("converged", fit.converged)?;
    d.set_item("intensity", at_points)?;
    Ok(d)
}

#[pyclass(name = "GlobalFit", module = "stlgcp", frozen, skip_from_py_object)]
pub struct PyGlobalFit(pub stlgcp::GlobalFitResult);

#[pymethods]
impl PyGlobalFit {
    #[getter]
    fn model(&self) -> PyModel {
        PyModel(self.0.params)
    }

    #[getter]
    fn contrast(&self) -> f64 {
        self.0.contrast
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.0.evaluations
    }

    fn __repr__(&self) -> String {
        format!("GlobalFit({}, contrast={})", PyModel(self.0.params).__repr__(), self.0.contrast)
    }
}

type SixNumbers = (f64, f64, f64, f64, f64, f64);

#[pyclass(name = "LocalFit", module = "stlgcp", frozen, skip_from_py_object)]
pub struct PyLocalFit {
    pub fit: stlgcp::LocalFitResult,
    pub pattern: stlgcp::PointPattern,
}

#[pymethods]
impl PyLocalFit {
    /// One model per point, in pattern order.
    #[getter]
    fn models(&self) -> Vec<PyModel> {
        self.fit.params.iter().copied().map(PyModel).collect()
    }

    #[getter]
    fn contrast(&self) -> Vec<f64> {
        self.fit.contrast.clone()
    }

    /// Indices of points whose local fit fell back to the global estimate.
    #[getter]
    fn failures(&self) -> Vec<usize> {
        self.fit.failures.iter().enumerate().filter(|(_, f)| f.is_some()).map(|(i, _)| i).collect()
    }

    #[getter]
    fn global_model(&self) -> PyModel {
        PyModel(self.fit.global)
    }

    /// `[(name, (min, q1, median, mean, q3, max))]` across points.
    fn summary(&self) -> Vec<(String, SixNumbers)> {
        stlgcp::contrast::summarize_local(&self.fit)
            .into_iter()
            .map(|(k, s)| (k.to_string(), (s.min, s.q1, s.median, s.mean, s.q3, s.max)))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.fit.len()
    }
}

struct FitInputs {
    lam: Vec<f64>,
    bw: BandwidthSet,
    spec: ContrastSpec,
    opts: FitOptions,
}

fn fit_inputs(
    pattern: &PyPattern,
    family: &str,
    grid: Option<&PyLagGrid>,
    intensity: Option<Vec<f64>>,
    bandwidths: Option<&PyBandwidths>,
    transform: &str,
    max_evals: Option<usize>,
) -> PyResult<FitInputs> {
    let p = &pattern.0;
    let grid = grid.map_or_else(|| LagGrid::default_for(p.window()), |g| g.0.clone());
    let bw = match bandwidths {
        Some(b) => b.0,
        None => BandwidthSet::auto(p).map_err(err)?,
    };
    let spec = ContrastSpec::new(grid, parse(family)?).with_transform(parse(transform)?);
    let mut opts = FitOptions::default();
    if let Some(m) = max_evals {
        opts.simplex.max_evals = m;
    }
    Ok(FitInputs { lam: intensity_at_points(p, intensity)?, bw, spec, opts })
}

/// Joint minimum-contrast fit.
#[pyfunction]
#[pyo3(signature = (pattern, family="sep_exp", grid=None, intensity=None, bandwidths=None, transform="identity", max_evals=None))]
#[allow(clippy::too_many_arguments)]
fn fit_global(
    py: Python<'_>,
    pattern: &PyPattern,
    family: &str,
    grid: Option<&PyLagGrid>,
    intensity: Option<Vec<f64>>,
    bandwidths: Option<&PyBandwidths>,
    transform: &str,
    max_evals: Option<usize>,
) -> PyResult<PyGlobalFit> {
    let f = fit_inputs(pattern, family, grid, intensity, bandwidths, transform, max_evals)?;
    py.detach(|| stlgcp::fit_global(&pattern.0, &f.lam, &f.spec, &f.bw, None, &f.opts)).map(PyGlobalFit).map_err(err)
}

/// Locally weighted fit; returns `(global, local)`.
#[pyfunction]
#[pyo3(signature = (pattern, family="sep_exp", grid=None, intensity=None, bandwidths=None, transform="identity", max_evals=None))]
#[allow(clippy::too_many_arguments)]
fn fit_local(
    py: Python<'_>,
    pattern: &PyPattern,
    family: &str,
    grid: Option<&PyLagGrid>,
    intensity: Option<Vec<f64>>,
    bandwidths: Option<&PyBandwidths>,
    transform: &str,
    max_evals: Option<usize>,
) -> PyResult<(PyGlobalFit, PyLocalFit)> {
    let f = fit_inputs(pattern, family, grid, intensity, bandwidths, transform, max_evals)?;
    let (global, local) =
        py.detach(|| stlgcp::fit_local(&pattern.0, &f.lam, &f.spec, &f.bw, None, &f.opts)).map_err(err)?;
    Ok((PyGlobalFit(global), PyLocalFit { fit: local, pattern: pattern.0.clone() }))
}

/// LGCP realization with a constant baseline giving `n_expected` points on average.
#[pyfunction]
#[pyo3(signature = (model, window, n_expected, seed, grid=(32, 32, 50), lookup="nearest"))]
fn simulate(
    py: Python<'_>,
    model: &PyModel,
    window: &PyWindow,
    n_expected: f64,
    seed: u64,
    grid: (usize, usize, usize),
    lookup: &str,
) -> PyResult<PyPattern> {
    let mut cfg = SimulationConfig::with_expected(model.0, window.0, grid, n_expected, seed).map_err(err)?;
    cfg.lookup = parse(lookup)?;
    py.detach(|| stlgcp::lgcp_simulate(&cfg)).map(|s| PyPattern(s.pattern)).map_err(err)
}

/// Monte Carlo K-function test. `model` is a CovarianceModel, a LocalFit, or
/// None for a Poisson null. Returns the statistic, p-value and envelopes.
#[pyfunction]
#[pyo3(signature = (pattern, model, seed, grid=None, q=DEFAULT_Q, sim_grid=(32, 32, 50), intensity=None))]
#[allow(clippy::too_many_arguments)]
fn mc_test<'py>(
    py: Python<'py>,
    pattern: &PyPattern,
    model: Option<&Bound<'py, PyAny>>,
    seed: u64,
    grid: Option<&PyLagGrid>,
    q: usize,
    sim_grid: (usize, usize, usize),
    intensity: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = &pattern.0;
    let fitted = match model {
        None => FittedModel::Poisson,
        Some(m) => {
            if let Ok(g) = m.cast::<PyModel>() {
                FittedModel::Global(g.get().0)
            } else if let Ok(l) = m.cast::<PyLocalFit>() {
                let l = l.get();
                FittedModel::Local { fit: l.fit.clone(), pattern: l.pattern.clone() }
            } else {
                return Err(StlgcpError::new_err("model must be a CovarianceModel, a LocalFit or None"));
            }
        }
    };
    let grid = grid.map_or_else(|| LagGrid::default_for(p.window()), |g| g.0.clone());
    let mut opts = DiagnosticOptions::default().with_q(q);
    opts.sim_grid = sim_grid;
    let lam = Intensity::Constant(intensity.unwrap_or_else(|| p.constant_intensity()));
    let d = py.detach(|| stlgcp::run_mc_test(p, &lam, &fitted, &grid, &opts, seed)).map_err(err)?;
    let nh = d.h_values.len();
    let out = PyDict::new(py);
    out.set_item("t_star", d.t_star)?;
    out.set_item("t_q", &d.t_q)?;
    out.set_item("p_value", d.p_value)?;
    out.set_item("cells_excluded", d.cells_excluded)?;
    out.set_item("r_values", &d.r_values)?;
    out.set_item("h_values", &d.h_values)?;
    out.set_item("observed", surface(&d.observed, nh))?;
    out.set_item("lower", surface(&d.lower, nh))?;
    out.set_item("upper", surface(&d.upper, nh))?;
    Ok(out)
}

/// Identifiers of the built-in scenario catalog.
#[pyfunction]
fn scenarios() -> Vec<String> {
    replicate::catalog().into_iter().map(|s| s.id).collect()
}

#[pymodule]
#[pyo3(name = "stlgcp")]
pub fn stlgcp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StlgcpError", m.py().get_type::<StlgcpError>())?;
    m.add_class::<PyWindow>()?;
    m.add_class::<PyPattern>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyBandwidths>()?;
    m.add_class::<PyLagGrid>()?;
    m.add_class::<PyGlobalFit>()?;
    m.add_class::<PyLocalFit>()?;
    m.add_function(wrap_pyfunction!(pcf, m)?)?;
    m.add_function(wrap_pyfunction!(pcf_local, m)?)?;
    m.add_function(wrap_pyfunction!(k_inhom, m)?)?;
    m.add_function(wrap_pyfunction!(fit_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(fit_global, m)?)?;
    m.add_function(wrap_pyfunction!(fit_local, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mc_test, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    Ok(())
}
