//! Python bindings: box domain, spectral states, trajectories, observables
//! and fractal fits. Times may be floats or strings such as `"rational 1/2"`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use serde_json::Value;

use qfractal::commands::{self, Command};
use qfractal::fractal::{self, FitOptions, GridRule, LengthTarget};
use qfractal::io::{RunConfig, TimeSpec};
use qfractal::observables;
use qfractal::{Error, IntegratorOptions, StateLabel, Term, TimePoint, TruncationLadder};

fn py_err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else if matches!(e, Error::Io { .. }) {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn time_arg(domain: &qfractal::BoxDomain, t: &Bound<'_, PyAny>) -> PyResult<TimePoint> {
    if let Ok(s) = t.extract::<String>() {
        return TimeSpec::parse(&s).and_then(|s| s.resolve(domain)).map_err(py_err);
    }
    Ok(TimePoint::at(t.extract::<f64>()?))
}

#[pyclass(name = "BoxDomain", frozen, from_py_object)]
#[derive(Clone)]
struct PyBoxDomain(qfractal::BoxDomain);

#[pymethods]
impl PyBoxDomain {
    #[new]
    #[pyo3(signature = (length = 1.0, mass = 1.0, hbar = 1.0))]
    fn new(length: f64, mass: f64, hbar: f64) -> PyResult<Self> {
        qfractal::BoxDomain::new(length, mass, hbar).map(Self).map_err(py_err)
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.0.period()
    }

    fn mode_energy(&self, n: u64) -> f64 {
        self.0.mode_energy(n)
    }

    fn eigenfunction(&self, n: u64, x: f64) -> PyResult<f64> {
        self.0.eigenfunction(n, x).map_err(py_err)
    }

    fn grid(&self, points: usize) -> Vec<f64> {
        self.0.grid(points)
    }

    fn __repr__(&self) -> String {
        format!(
            "BoxDomain(length={}, mass={}, hbar={})",
            self.0.length(),
            self.0.mass(),
            self.0.hbar()
        )
    }
}

fn domain_or_unit(domain: Option<PyBoxDomain>) -> qfractal::BoxDomain {
    domain.map(|d| d.0).unwrap_or_default()
}

#[pyclass(name = "SpectralState", frozen)]
struct PyState(qfractal::SpectralState);

impl PyState {
    fn n(&self, n_terms: Option<usize>) -> usize {
        n_terms.unwrap_or(self.0.len())
    }
}

#[pymethods]
impl PyState {
    #[staticmethod]
    #[pyo3(signature = (x1, x2, n_max, normalize = false, domain = None))]
    fn uniform(x1: f64, x2: f64, n_max: u64, normalize: bool, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        qfractal::SpectralState::uniform(domain_or_unit(domain), x1, x2, n_max, normalize)
            .map(Self)
            .map_err(py_err)
    }

    /// Full-box uniform state with `count` odd modes.
    #[staticmethod]
    #[pyo3(signature = (count, normalize = false, domain = None))]
    fn uniform_full(count: usize, normalize: bool, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        qfractal::SpectralState::uniform_full(domain_or_unit(domain), count, normalize)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (s, base, levels, normalize = true, domain = None))]
    fn weierstrass(s: f64, base: u64, levels: u32, normalize: bool, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        qfractal::SpectralState::weierstrass(domain_or_unit(domain), s, base, levels, normalize)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (n_max, domain = None))]
    fn triangle(n_max: u64, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        qfractal::SpectralState::triangle(domain_or_unit(domain), n_max)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (n_max, domain = None))]
    fn parabola(n_max: u64, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        qfractal::SpectralState::parabola(domain_or_unit(domain), n_max)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (n, domain = None))]
    fn eigenstate(n: u64, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        qfractal::SpectralState::eigenstate(domain_or_unit(domain), n)
            .map(Self)
            .map_err(py_err)
    }

    /// From `(n, c_n)` pairs with strictly increasing `n`.
    #[staticmethod]
    #[pyo3(signature = (terms, domain = None))]
    fn from_coefficients(terms: Vec<(u64, Complex64)>, domain: Option<PyBoxDomain>) -> PyResult<Self> {
        let terms = terms.into_iter().map(|(n, c)| Term { n, c }).collect();
        qfractal::SpectralState::new(domain_or_unit(domain), terms, StateLabel::Custom)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn domain(&self) -> PyBoxDomain {
        PyBoxDomain(*self.0.domain())
    }

    #[getter]
    fn modes(&self) -> Vec<u64> {
        self.0.terms().iter().map(|t| t.n).collect()
    }

    #[getter]
    fn coefficients(&self) -> Vec<Complex64> {
        self.0.terms().iter().map(|t| t.c).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[pyo3(signature = (n_terms = None))]
    fn norm_sqr(&self, n_terms: Option<usize>) -> f64 {
        self.0.norm_sqr(self.n(n_terms))
    }

    #[pyo3(signature = (n_terms = None))]
    fn mean_energy(&self, n_terms: Option<usize>) -> PyResult<f64> {
        observables::ensemble_energy(&self.0, self.n(n_terms)).map_err(py_err)
    }

    /// `(Ψ, ∂xΨ, ∂xxΨ)` at one point.
    #[pyo3(signature = (t, x, n_terms = None))]
    fn evaluate(&self, t: &Bound<'_, PyAny>, x: f64, n_terms: Option<usize>) -> PyResult<(Complex64, Complex64, Complex64)> {
        let time = time_arg(self.0.domain(), t)?;
        let w = self.0.evaluate(time, x, self.n(n_terms)).map_err(py_err)?;
        Ok((w.psi, w.dpsi, w.d2psi))
    }

    #[pyo3(signature = (t, xs, n_terms = None))]
    fn psi(&self, py: Python<'_>, t: &Bound<'_, PyAny>, xs: Vec<f64>, n_terms: Option<usize>) -> PyResult<Vec<Complex64>> {
        let time = time_arg(self.0.domain(), t)?;
        let n = self.n(n_terms);
        py.detach(|| self.0.at_time(time, n)?.psi_grid(&xs))
            .map_err(py_err)
    }

    #[pyo3(signature = (t, xs, n_terms = None))]
    fn density(&self, py: Python<'_>, t: &Bound<'_, PyAny>, xs: Vec<f64>, n_terms: Option<usize>) -> PyResult<Vec<f64>> {
        Ok(self.psi(py, t, xs, n_terms)?.iter().map(|p| p.norm_sqr()).collect())
    }

    fn __repr__(&self) -> String {
        format!("SpectralState({}, terms={})", self.0.label().name(), self.0.len())
    }
}

#[pyfunction]
#[pyo3(signature = (state, t, x, n_terms = None))]
fn velocity(state: &PyState, t: &Bound<'_, PyAny>, x: f64, n_terms: Option<usize>) -> PyResult<f64> {
    let time = time_arg(state.0.domain(), t)?;
    qfractal::velocity(&state.0, time, x, state.n(n_terms)).map_err(py_err)
}

/// Quantum potential; `±inf` on a node.
#[pyfunction]
#[pyo3(signature = (state, t, x, n_terms = None))]
fn quantum_potential(state: &PyState, t: &Bound<'_, PyAny>, x: f64, n_terms: Option<usize>) -> PyResult<f64> {
    let time = time_arg(state.0.domain(), t)?;
    observables::quantum_potential(&state.0, time, x, state.n(n_terms))
        .map(|q| q.value())
        .map_err(py_err)
}

fn options(tol_step: Option<f64>, samples_per_period: Option<usize>) -> IntegratorOptions {
    let mut o = IntegratorOptions::default();
    if let Some(t) = tol_step {
        o.tol_step = t;
    }
    if let Some(s) = samples_per_period {
        o.samples_per_period = s;
    }
    o
}

/// Trajectory as a dict with `t`, `x`, `v` lists and step counters.
#[pyfunction]
#[pyo3(signature = (state, x0, t_start, t_end, n_terms = None, tol_step = None, samples_per_period = None))]
#[allow(clippy::too_many_arguments)]
fn integrate<'py>(
    py: Python<'py>,
    state: &PyState,
    x0: f64,
    t_start: &Bound<'py, PyAny>,
    t_end: &Bound<'py, PyAny>,
    n_terms: Option<usize>,
    tol_step: Option<f64>,
    samples_per_period: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let d = state.0.domain();
    let span = [time_arg(d, t_start)?.t, time_arg(d, t_end)?.t];
    let opts = options(tol_step, samples_per_period);
    let n = state.n(n_terms);
    let traj = py
        .detach(|| qfractal::integrate(&state.0, x0, span, n, &opts))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("x0", traj.x0)?;
    out.set_item("N", traj.truncation)?;
    out.set_item("t", traj.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    out.set_item("x", traj.samples.iter().map(|s| s.x).collect::<Vec<_>>())?;
    out.set_item("v", traj.samples.iter().map(|s| s.v).collect::<Vec<_>>())?;
    out.set_item("rejected_steps", traj.rejected_steps)?;
    Ok(out.into_any())
}

/// Length-scaling fit of the density at time `t`.
#[pyfunction]
#[pyo3(signature = (state, t, ladder, window = None))]
fn density_fit<'py>(
    py: Python<'py>,
    state: &PyState,
    t: &Bound<'py, PyAny>,
    ladder: Vec<usize>,
    window: Option<[usize; 2]>,
) -> PyResult<Bound<'py, PyAny>> {
    let time = time_arg(state.0.domain(), t)?;
    let ladder = TruncationLadder::new(ladder).map_err(py_err)?;
    let opts = FitOptions {
        window,
        ..FitOptions::default()
    };
    let fit = py
        .detach(|| {
            fractal::length_scaling_fit(&state.0, time, GridRule::default(), &ladder, &LengthTarget::Density, &opts)
        })
        .map_err(py_err)?;
    to_py(py, &fit)
}

/// Length-scaling fit of the trajectory from `x0` over `[t_start, t_end]`.
#[pyfunction]
#[pyo3(signature = (state, x0, t_start, t_end, ladder, window = None, tol_step = None))]
#[allow(clippy::too_many_arguments)]
fn trajectory_fit<'py>(
    py: Python<'py>,
    state: &PyState,
    x0: f64,
    t_start: &Bound<'py, PyAny>,
    t_end: &Bound<'py, PyAny>,
    ladder: Vec<usize>,
    window: Option<[usize; 2]>,
    tol_step: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let d = state.0.domain();
    let t_span = [time_arg(d, t_start)?.t, time_arg(d, t_end)?.t];
    let ladder = TruncationLadder::new(ladder).map_err(py_err)?;
    let target = LengthTarget::Trajectory {
        x0,
        t_span,
        options: options(tol_step, None),
    };
    let opts = FitOptions {
        window,
        check_resolution: false,
        ..FitOptions::default()
    };
    let fit = py
        .detach(|| fractal::length_scaling_fit(&state.0, 0.0, GridRule::default(), &ladder, &target, &opts))
        .map_err(py_err)?;
    to_py(py, &fit)
}

#[pyfunction]
fn spectrum_fit<'py>(py: Python<'py>, state: &PyState) -> PyResult<Bound<'py, PyAny>> {
    let fit = fractal::spectrum_dimension(&state.0, &FitOptions::default()).map_err(py_err)?;
    to_py(py, &fit)
}

/// Runs a CLI command from a config file; returns the written file names.
#[pyfunction]
fn run(py: Python<'_>, command: &str, config: PathBuf, out: PathBuf) -> PyResult<Vec<String>> {
    let cmd = match command {
        "build-state" => Command::BuildState,
        "carpet" => Command::Carpet,
        "trajectories" => Command::Trajectories,
        "profile" => Command::Profile,
        "energy" => Command::Energy,
        "fractal" => Command::Fractal,
        other => return Err(PyValueError::new_err(format!("unknown command '{other}'"))),
    };
    let cfg = RunConfig::load(&config).map_err(py_err)?;
    py.detach(|| commands::run(cmd, &cfg, &out))
        .map(|o| o.files)
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "qfractal")]
fn qfractal_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBoxDomain>()?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(velocity, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_potential, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(density_fit, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_fit, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_fit, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
