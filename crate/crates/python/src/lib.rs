//! Python bindings: configs, marching, diagnostics and the verification oracles.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use xdiff_core::config::{format_scheme_section, parse_config, parse_config_str, ConfigFile};
use xdiff_core::continuation::{run_continuation, ContinuationPlan};
use xdiff_core::diagnostics::{entropy_series, DiagnosticsRecord};
use xdiff_core::entropy::{certify as certify_core, CertifyRanges};
use xdiff_core::initial::InitialData;
use xdiff_core::scheme::{self, initial_state, MarchError};
use xdiff_core::Error;

create_exception!(xdiff, SolverError, PyRuntimeError, "A time step failed to converge.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::Parse { .. } | Error::UnknownTestFunction(_) | Error::Domain { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

/// Scheme parameters; `initial_data` uses the config-file preset syntax.
#[pyclass(name = "SchemeConfig", module = "xdiff", from_py_object)]
#[derive(Clone)]
struct PySchemeConfig {
    inner: scheme::SchemeConfig,
}

#[pymethods]
impl PySchemeConfig {
    #[new]
    #[pyo3(signature = (eps, sigma, horizon, grid_cells, initial_data, newton_tol=None, newton_max_iter=None, damping_min=None, auto_halving=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        eps: f64,
        sigma: f64,
        horizon: f64,
        grid_cells: usize,
        initial_data: &str,
        newton_tol: Option<f64>,
        newton_max_iter: Option<usize>,
        damping_min: Option<f64>,
        auto_halving: bool,
    ) -> PyResult<Self> {
        let data: InitialData = initial_data.parse().map_err(to_py)?;
        let mut c = scheme::SchemeConfig::new(eps, sigma, horizon, grid_cells, data).map_err(to_py)?;
        if let Some(t) = newton_tol {
            c.newton_tol = t;
        }
        if let Some(n) = newton_max_iter {
            c.newton_max_iter = n;
        }
        if let Some(d) = damping_min {
            c.damping_min = d;
        }
        c.auto_halving = auto_halving;
        c.validate().map_err(to_py)?;
        Ok(Self { inner: c })
    }

    /// Parse a run file, manifest or sweep plan (the base config of a plan).
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Self::wrap(parse_config(path).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Self::wrap(parse_config_str("<string>", text).map_err(to_py)?)
    }

    /// `[scheme]` section that parses back to this config.
    fn to_text(&self) -> String {
        format_scheme_section(&self.inner)
    }

    fn with_sigma(&self, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_sigma(sigma).map_err(to_py)?,
        })
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }
    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }
    #[getter]
    fn grid_cells(&self) -> usize {
        self.inner.grid_cells
    }
    #[getter]
    fn initial_data(&self) -> String {
        self.inner.initial_data.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "SchemeConfig(eps={:?}, sigma={:?}, horizon={:?}, grid_cells={}, initial_data={:?})",
            self.inner.eps,
            self.inner.sigma,
            self.inner.horizon,
            self.inner.grid_cells,
            self.inner.initial_data.to_string()
        )
    }
}

impl PySchemeConfig {
    fn wrap(f: ConfigFile) -> PyResult<Self> {
        Ok(Self {
            inner: match f {
                ConfigFile::Run(c) => c,
                ConfigFile::Sweep(p) => p.base,
            },
        })
    }
}

/// Stored states of a completed march.
#[pyclass(name = "Trajectory", module = "xdiff", frozen)]
struct PyTrajectory {
    inner: scheme::Trajectory,
}

fn record_dict<'py>(py: Python<'py>, r: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    d.set_item("time", r.time)?;
    d.set_item("entropy", r.entropy)?;
    d.set_item("mass_rho", r.mass_rho)?;
    d.set_item("mass_mu", r.mass_mu)?;
    d.set_item("diss_u", r.diss_u)?;
    d.set_item("diss_v", r.diss_v)?;
    d.set_item("diss_rho", r.diss_rho)?;
    d.set_item("diss_mu", r.diss_mu)?;
    d.set_item("degeneracy_measure", r.degeneracy_measure)?;
    d.set_item("min_rho", r.min_rho)?;
    d.set_item("max_rho", r.max_rho)?;
    d.set_item("min_mu", r.min_mu)?;
    d.set_item("max_mu", r.max_mu)?;
    d.set_item("newton_iters", r.newton_iters)?;
    Ok(d)
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn newton_iters(&self) -> Vec<usize> {
        self.inner.newton_iters.clone()
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.grid.nodes().collect()
    }

    #[getter]
    fn config(&self) -> PySchemeConfig {
        PySchemeConfig {
            inner: self.inner.config.clone(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.states.len()
    }

    /// `(rho, mu)` nodal densities of state `k`; negative `k` counts from the end.
    fn densities(&self, k: isize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let n = self.inner.states.len() as isize;
        let idx = if k < 0 { k + n } else { k };
        if !(0..n).contains(&idx) {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "state {k} out of range"
            )));
        }
        let (rho, mu) = self.inner.states[idx as usize].densities();
        Ok((rho.into_inner(), mu.into_inner()))
    }

    /// `(w1, w2)` entropy variables of state `k`.
    fn entropy_variables(&self, k: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let s = self
            .inner
            .states
            .get(k)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("state {k} out of range")))?;
        Ok((s.w1.clone().into_inner(), s.w2.clone().into_inner()))
    }

    fn entropy(&self) -> Vec<f64> {
        self.inner
            .states
            .iter()
            .map(|s| scheme::entropy(s, &self.inner.grid))
            .collect()
    }

    /// One dict per stored state with the diagnostics CSV columns.
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let records = entropy_series(&self.inner).map_err(to_py)?;
        records.iter().map(|r| record_dict(py, r)).collect()
    }

    /// `(rho, mu)` weak residual against a bank test function such as `"k1p1"`.
    fn weak_residual(&self, test_id: &str) -> PyResult<(f64, f64)> {
        let r = xdiff_core::diagnostics::weak_residual(&self.inner, self.inner.config.eps, test_id).map_err(to_py)?;
        Ok((r.rho, r.mu))
    }
}

/// March a config to its horizon. Raises `SolverError` on a failed step.
#[pyfunction]
fn march(py: Python<'_>, config: &PySchemeConfig) -> PyResult<PyTrajectory> {
    let c = config.inner.clone();
    let result = py.detach(move || scheme::march(&c));
    match result {
        Ok(t) => Ok(PyTrajectory { inner: t }),
        Err(MarchError::Setup(e)) => Err(to_py(e)),
        Err(e) => Err(to_py(e.into())),
    }
}

/// Summary of the convexity and Lyapunov slack sampling.
#[pyfunction]
#[pyo3(signature = (rho_max=10.0, mu_max=10.0, samples=100, eps=vec![1.0, 0.1, 0.01]))]
fn certify<'py>(
    py: Python<'py>,
    rho_max: f64,
    mu_max: f64,
    samples: usize,
    eps: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let ranges = CertifyRanges {
        rho_max,
        mu_max,
        samples_per_axis: samples,
        eps_values: eps,
    };
    let (_, s) = certify_core(&ranges).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("samples", s.samples)?;
    d.set_item("min_ms1", s.min_ms1)?;
    d.set_item("min_lyp2", s.min_lyp2)?;
    d.set_item("min_lyp3", s.min_lyp3)?;
    d.set_item("lyp2_sign_mismatches", s.lyp2_sign_mismatches)?;
    d.set_item("form_disagreements", s.form_disagreements)?;
    Ok(d)
}

/// Next constant density of the implicit step from the constant state `c`.
#[pyfunction]
fn constant_drift(c: f64, sigma: f64) -> PyResult<f64> {
    xdiff_core::oracle::constant_drift(c, sigma).map_err(to_py)
}

#[pyfunction]
fn coeff_determinant(rho: f64, mu: f64, eps: f64) -> PyResult<f64> {
    xdiff_core::nonlinearity::coeff_determinant(rho, mu, eps).map_err(to_py)
}

#[pyfunction]
fn entropy_density(rho: f64, mu: f64) -> PyResult<f64> {
    xdiff_core::entropy::entropy_density(rho, mu).map_err(to_py)
}

/// Explicit fine-step reference densities at the config horizon.
#[pyfunction]
fn explicit_reference(py: Python<'_>, config: &PySchemeConfig) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = config.inner.clone();
    let (rho, mu) = py
        .detach(move || -> xdiff_core::Result<_> {
            let o = xdiff_core::oracle::OracleConfig::at_cfl(c.grid_cells, c.eps, c.horizon)?;
            xdiff_core::oracle::explicit_reference(&o, &initial_state(&c)?)
        })
        .map_err(to_py)?;
    Ok((rho.into_inner(), mu.into_inner()))
}

/// ε-continuation table: one dict per ε with `d_n` to the previous entry.
#[pyfunction]
fn continuation<'py>(
    py: Python<'py>,
    eps_sequence: Vec<f64>,
    config: &PySchemeConfig,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let shared = config.inner.clone();
    let report = py
        .detach(move || ContinuationPlan::new(eps_sequence, shared).and_then(|p| run_continuation(&p)))
        .map_err(to_py)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("n", r.n)?;
            d.set_item("eps", r.eps)?;
            d.set_item("final_entropy", r.final_entropy)?;
            d.set_item("degeneracy_measure_max", r.degeneracy_measure_max)?;
            d.set_item("d_n", r.d_n)?;
            d.set_item("d_sup", r.d_sup)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn xdiff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<PySchemeConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(march, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(constant_drift, m)?)?;
    m.add_function(wrap_pyfunction!(coeff_determinant, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_density, m)?)?;
    m.add_function(wrap_pyfunction!(explicit_reference, m)?)?;
    m.add_function(wrap_pyfunction!(continuation, m)?)?;
    Ok(())
}
