use pyo3::prelude::*;
use pyo3::types::PyDict;
use stlgcp_py::stlgcp_py;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(stlgcp_py);
        Python::initialize();
    });
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("st", py.import("stlgcp").unwrap()).unwrap();
        f(py, &globals)
    })
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(globals), None)
}

#[test]
fn round_trip_through_python() {
    with_module(|py, g| {
        let code = r#"
w = st.Window(0, 1, 0, 1, 0, 10)
m = st.CovarianceModel.scenario("t1-05")
p = st.simulate(m, w, 200, 11, grid=(10, 10, 10))
n = len(p)
grid = st.LagGrid(0.2, 2.0, 4, 4)
g = st.pcf(p, grid)
local = st.pcf_local(p, grid)
avg = sum(l[1][1] for l in local) / n
assert abs(avg - g[1][1]) <= 1e-9 * max(1.0, abs(avg))
fit = st.fit_global(p, grid=grid, max_evals=200)
assert fit.contrast >= 0.0
"#;
        run(py, g, code).unwrap_or_else(|e| panic!("{e}"));
    });
}

#[test]
fn errors_surface_as_value_errors() {
    with_module(|py, g| {
        let code = r#"
try:
    st.Window(1, 0, 0, 1, 0, 1)
except ValueError as e:
    assert isinstance(e, st.StlgcpError)
else:
    raise AssertionError("reversed interval accepted")
try:
    st.pcf(st.PointPattern([(0.5, 0.5, 0.5)], st.Window(0, 1, 0, 1, 0, 1)), st.LagGrid(0.1, 0.1, 2, 2),
           bandwidths=st.Bandwidths(0.1, 0.1, 0.1, 0.1, 0.1))
except st.StlgcpError as e:
    assert "n = 1" in str(e)
else:
    raise AssertionError("single point accepted")
"#;
        run(py, g, code).unwrap_or_else(|e| panic!("{e}"));
    });
}
