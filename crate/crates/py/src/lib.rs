//! Python bindings: spaces, the semilinear solver, spectral and
//! splitting audits, capacity, and the reduced profile ODE. Structured
//! results cross the boundary as JSON strings; fields as flat lists in
//! node-index order.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use driftlab::capacity::{parabolicity_by_growth, solve_capacitor, TOL_CAP_REL};
use driftlab::config::{parse_initial_guess, parse_nonlinearity, space_from_text};
use driftlab::profile::{growth_diagnostic, log_cutoff as cutoff, log_cutoff_gradient_sq};
use driftlab::rigidity::{splitting_audit, AuditOptions, ToleranceSet};
use driftlab::solve::{energy, newton_solve, pde_residual, SolverOptions};
use driftlab::stability::min_eigenpair;
use driftlab::{Error, Exhaustion, ModelSpace, Region, ScalarField};

fn convert(err: Error) -> PyErr {
    match err {
        Error::Config { .. } | Error::FieldFile(_) => PyValueError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A discretized weighted model manifold.
#[pyclass(name = "Space")]
struct PySpace {
    inner: Arc<ModelSpace>,
}

#[pymethods]
impl PySpace {
    /// Builds a space from the key-value config grammar.
    #[new]
    fn new(config_text: &str) -> PyResult<Self> {
        let space = space_from_text(config_text).map_err(convert)?;
        Ok(PySpace {
            inner: Arc::new(space),
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.ndim()
    }

    #[getter]
    fn axis_extent(&self) -> f64 {
        self.inner.axis_extent()
    }

    fn coords(&self, node: usize) -> PyResult<Vec<f64>> {
        if node >= self.inner.num_nodes() {
            return Err(PyValueError::new_err("node index out of range"));
        }
        Ok(self.inner.grid.coords(node))
    }

    /// Weighted volume of the ball of radius r about the center, or of
    /// the whole truncated domain when r is omitted.
    #[pyo3(signature = (r=None))]
    fn weighted_volume(&self, r: Option<f64>) -> PyResult<f64> {
        let region = match r {
            Some(r) => Region::ball_at_center(&self.inner, r),
            None => Region::FullDomain,
        };
        driftlab::weighted_volume(&self.inner, &region).map_err(convert)
    }

    fn boundary_area(&self, r: f64) -> PyResult<f64> {
        driftlab::boundary_area(&self.inner, r).map_err(convert)
    }

    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.config).map_err(|e| convert(e.into()))
    }
}

fn field_from(space: &PySpace, values: Vec<f64>) -> PyResult<ScalarField> {
    ScalarField::new(space.inner.clone(), values).map_err(convert)
}

/// Solves Δ_f u + g(u) = 0. Returns (values, residual_norm, iterations,
/// converged).
#[pyfunction]
#[pyo3(signature = (space, nl, init, tol=1e-10, pin=true, max_iter=50))]
fn solve(
    space: &PySpace,
    nl: &str,
    init: &str,
    tol: f64,
    pin: bool,
    max_iter: usize,
) -> PyResult<(Vec<f64>, f64, usize, bool)> {
    let nl = parse_nonlinearity(nl).map_err(convert)?;
    let guess = parse_initial_guess(init).map_err(convert)?;
    let outcome = newton_solve(
        &space.inner,
        &nl,
        &guess.build(&space.inner),
        &SolverOptions {
            tol,
            max_iter,
            pin_center: pin,
            ..Default::default()
        },
    )
    .map_err(convert)?;
    Ok((
        outcome.u.into_values(),
        outcome.residual_norm,
        outcome.iterations,
        outcome.converged,
    ))
}

/// Max norm of the pointwise residual Δ_f u + g(u).
#[pyfunction]
fn residual_max(space: &PySpace, values: Vec<f64>, nl: &str) -> PyResult<f64> {
    let nl = parse_nonlinearity(nl).map_err(convert)?;
    let u = field_from(space, values)?;
    Ok(pde_residual(&u, &nl).max_abs())
}

/// Energy functional over the whole truncated domain.
#[pyfunction]
fn energy_total(space: &PySpace, values: Vec<f64>, nl: &str) -> PyResult<f64> {
    let nl = parse_nonlinearity(nl).map_err(convert)?;
    let u = field_from(space, values)?;
    energy(&u, &nl, &Region::FullDomain).map_err(convert)
}

/// Smallest eigenpair of the stability operator. Returns
/// (lambda_min, eigenfield, positivity, stable).
#[pyfunction]
#[pyo3(signature = (space, values, nl, tol=1e-9))]
fn stability(
    space: &PySpace,
    values: Vec<f64>,
    nl: &str,
    tol: f64,
) -> PyResult<(f64, Vec<f64>, String, bool)> {
    let nl = parse_nonlinearity(nl).map_err(convert)?;
    let u = field_from(space, values)?;
    let report = min_eigenpair(&u, &nl, tol).map_err(convert)?;
    Ok((
        report.lambda_min,
        report.eigenfield.values().to_vec(),
        format!("{:?}", report.positivity),
        report.stable,
    ))
}

/// Full splitting audit; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (space, values, nl, levels=9, seeds=8, eigen_tol=1e-9))]
fn split_report(
    space: &PySpace,
    values: Vec<f64>,
    nl: &str,
    levels: usize,
    seeds: usize,
    eigen_tol: f64,
) -> PyResult<String> {
    let nl = parse_nonlinearity(nl).map_err(convert)?;
    let u = field_from(space, values)?;
    let spectral = min_eigenpair(&u, &nl, eigen_tol).map_err(convert)?;
    let report = splitting_audit(
        &u,
        &nl,
        &spectral,
        &ToleranceSet::default(),
        &AuditOptions {
            levels,
            seeds,
            ..Default::default()
        },
    )
    .map_err(convert)?;
    serde_json::to_string(&report).map_err(|e| convert(e.into()))
}

/// Capacitor energy of the pair (ball r_k, ball r_omega).
#[pyfunction]
fn capacity(space: &PySpace, r_k: f64, r_omega: f64) -> PyResult<f64> {
    let k = Region::ball_at_center(&space.inner, r_k);
    let omega = Region::ball_at_center(&space.inner, r_omega);
    Ok(solve_capacitor(&space.inner, &k, &omega)
        .map_err(convert)?
        .energy)
}

/// Capacity decay along concentric exhaustion radii; returns
/// (energies, limit_estimate, converged_to_zero).
#[pyfunction]
fn capacity_sequence(
    space: &PySpace,
    r_k: f64,
    radii: Vec<f64>,
) -> PyResult<(Vec<f64>, f64, bool)> {
    let k = Region::ball_at_center(&space.inner, r_k);
    let exhaustion = Exhaustion::balls(&space.inner, &radii);
    let seq = driftlab::capacity::capacity_limit(&space.inner, &k, &exhaustion, TOL_CAP_REL)
        .map_err(convert)?;
    Ok((seq.energies, seq.limit_estimate, seq.converged_to_zero))
}

/// Growth-criterion parabolicity verdict as a JSON string.
#[pyfunction]
fn parabolicity_growth(space: &PySpace, r_max: f64) -> PyResult<String> {
    let verdict = parabolicity_by_growth(&space.inner, r_max).map_err(convert)?;
    serde_json::to_string(&verdict).map_err(|e| convert(e.into()))
}

/// Solves -y'' + k y' = g(y); returns (t, y, y_prime, residual,
/// monotone).
#[pyfunction]
#[pyo3(signature = (nl, k, lo, hi, extent, h, tol=1e-9, pin=None))]
#[allow(clippy::too_many_arguments)]
fn profile(
    nl: &str,
    k: f64,
    lo: f64,
    hi: f64,
    extent: f64,
    h: f64,
    tol: f64,
    pin: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, f64, bool)> {
    let nl = parse_nonlinearity(nl).map_err(convert)?;
    let sol = driftlab::profile::solve_profile(&nl, k, (lo, hi), extent, h, tol, pin)
        .map_err(convert)?;
    Ok((sol.t, sol.y, sol.y_prime, sol.ode_residual_max, sol.monotone))
}

/// Growth-model fit of (R, Q) samples as a JSON string.
#[pyfunction]
fn growth_fit(samples: Vec<(f64, f64)>) -> PyResult<String> {
    let diag = growth_diagnostic(&samples).map_err(convert)?;
    serde_json::to_string(&diag).map_err(|e| convert(e.into()))
}

/// The logarithmic cut-off h_R(r).
#[pyfunction]
fn log_cutoff(radius: f64, r: f64) -> PyResult<f64> {
    cutoff(radius, r).map_err(convert)
}

/// |∇h_R|²(r).
#[pyfunction]
fn log_cutoff_grad_sq(radius: f64, r: f64) -> PyResult<f64> {
    log_cutoff_gradient_sq(radius, r).map_err(convert)
}

#[pymodule]
fn driftlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(residual_max, m)?)?;
    m.add_function(wrap_pyfunction!(energy_total, m)?)?;
    m.add_function(wrap_pyfunction!(stability, m)?)?;
    m.add_function(wrap_pyfunction!(split_report, m)?)?;
    m.add_function(wrap_pyfunction!(capacity, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(parabolicity_growth, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(growth_fit, m)?)?;
    m.add_function(wrap_pyfunction!(log_cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(log_cutoff_grad_sq, m)?)?;
    Ok(())
}
