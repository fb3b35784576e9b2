//! Python bindings for the contactlab core.

use contactlab::contact_core::{self, models, ContactChart};
use contactlab::decay_lab::{self, IntervalSeq};
use contactlab::normal_form::standard_j;
use contactlab::reeb_dynamics::{self, OrbitOptions};
use contactlab::scenario::{self, Scenario};
use contactlab::spectral::{self, SpectralOperator, ZerothOrder};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A named model chart: darboux [n], torus, torus_cover, ellipsoid [w_axis, w_trans].
#[pyclass(name = "Chart", frozen)]
struct PyChart {
    inner: ContactChart,
}

impl PyChart {
    fn point(&self, x: Vec<f64>) -> PyResult<DVector<f64>> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.inner.dim(), x.len())));
        }
        Ok(DVector::from_vec(x))
    }
}

#[pymethods]
impl PyChart {
    #[new]
    #[pyo3(signature = (name, params = Vec::new()))]
    fn new(name: &str, params: Vec<f64>) -> PyResult<Self> {
        models::by_name(name, &params)
            .map(|inner| PyChart { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown chart '{name}' with params {params:?}")))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn lambda_at(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.lambda_at(&self.point(x)?).as_slice().to_vec())
    }

    fn contact_volume(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.contact_volume(&self.point(x)?))
    }

    fn reeb(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let r = contact_core::reeb_field(&self.inner, &self.point(x)?).map_err(value_err)?;
        Ok(r.as_slice().to_vec())
    }

    /// ♭: covector components to the dual vector.
    fn flat(&self, alpha: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let a = self.point(alpha)?;
        let v = contact_core::flat_dual_covector(&self.inner, &a, &self.point(x)?).map_err(value_err)?;
        Ok(v.as_slice().to_vec())
    }

    /// ♯: vector to covector components.
    fn sharp(&self, v: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let v = self.point(v)?;
        Ok(contact_core::sharp_dual(&self.inner, &v, &self.point(x)?).as_slice().to_vec())
    }

    /// Closed Reeb orbit near `guess`; returns (period, closure residual, samples).
    #[pyo3(signature = (guess, period_guess, n_samples = 64, tol = 1e-8))]
    fn closed_orbit(&self, guess: Vec<f64>, period_guess: f64, n_samples: usize, tol: f64) -> PyResult<(f64, f64, Vec<Vec<f64>>)> {
        let opts = OrbitOptions { n_samples, tol, ..OrbitOptions::default() };
        let o = reeb_dynamics::find_closed_orbit(&self.inner, &self.point(guess)?, period_guess, &opts).map_err(runtime_err)?;
        Ok((o.period, o.closure_residual, o.samples.iter().map(|z| z.as_slice().to_vec()).collect()))
    }

    /// Linearised return map of the orbit of given period through `x`, row-major.
    fn return_map(&self, x: Vec<f64>, period: f64) -> PyResult<Vec<Vec<f64>>> {
        let opts = OrbitOptions::default();
        let o = reeb_dynamics::ReebOrbit::through(&self.inner, &self.point(x)?, period, &opts).map_err(runtime_err)?;
        let rm = reeb_dynamics::return_map(&self.inner, &o).map_err(runtime_err)?;
        Ok(rm.matrix.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Chart('{}', dim={})", self.inner.name(), self.inner.dim())
    }
}

/// Sorted eigenvalues and gap of −J₀∂_t − S on loops of period T, S = s·Id on ℝ^{2k}.
#[pyfunction]
#[pyo3(signature = (s, rank_k = 1, period = 1.0, n_modes = 64))]
fn constant_spectrum(s: f64, rank_k: usize, period: f64, n_modes: usize) -> PyResult<(Vec<f64>, f64, usize)> {
    if rank_k == 0 {
        return Err(PyValueError::new_err("rank_k must be positive"));
    }
    let r = 2 * rank_k;
    let op = SpectralOperator::new(standard_j(rank_k), ZerothOrder::Constant(DMatrix::identity(r, r) * s), period, n_modes).map_err(value_err)?;
    let sp = spectral::spectrum(&op);
    Ok((sp.eigenvalues.as_slice().to_vec(), sp.gap, sp.kernel_dim))
}

#[pyfunction]
fn growth_factor(gamma: f64) -> PyResult<f64> {
    decay_lab::growth_factor(gamma).map_err(value_err)
}

#[pyfunction]
fn gamma_of_c(c: f64) -> PyResult<f64> {
    decay_lab::gamma_of_c(c).map_err(value_err)
}

/// Returns (hypothesis holds, bound holds, bounds).
#[pyfunction]
fn three_interval(x: Vec<f64>, gamma: f64) -> PyResult<(bool, bool, Vec<f64>)> {
    let seq = IntervalSeq::new(x, gamma).map_err(value_err)?;
    let r = decay_lab::three_interval_bound(&seq);
    Ok((r.hypothesis_holds, r.bound_holds, r.bounds))
}

/// Run a scenario given as JSON text; returns the JSON report.
#[pyfunction]
fn run_scenario(text: &str) -> PyResult<String> {
    let s = Scenario::parse(text).map_err(value_err)?;
    let r = scenario::run_scenario(&s).map_err(|e| match e.exit_code() {
        2 => value_err(e),
        _ => runtime_err(e),
    })?;
    Ok(scenario::report_json(&r))
}

#[pymodule]
fn contactlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChart>()?;
    m.add_function(wrap_pyfunction!(constant_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(growth_factor, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_of_c, m)?)?;
    m.add_function(wrap_pyfunction!(three_interval, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
