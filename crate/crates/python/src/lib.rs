//! Python bindings: table arithmetic, the EPR check, peak fitting and the
//! calibrated simulator. Structured results come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use epr_qkd::adversary::{AttackConfig, BasisPolicy};
use epr_qkd::analysis::{self, DetectorLabel, ScanSpec};
use epr_qkd::config::{RunConfig, Setup};
use epr_qkd::protocol::{self, CoincidenceTable, SessionConfig};
use epr_qkd::source::PumpProfile;
use epr_qkd::{detection, fixtures, Basis, Error};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn table_from(counts: Vec<Vec<u64>>) -> PyResult<CoincidenceTable> {
    if counts.len() != 4 || counts.iter().any(|r| r.len() != 4) {
        return Err(PyValueError::new_err("counts must be a 4x4 nested list (rows Ax1..Ap2, columns Bx1..Bp2)"));
    }
    let mut out = [[0u64; 4]; 4];
    for (i, row) in counts.iter().enumerate() {
        out[i].copy_from_slice(row);
    }
    Ok(CoincidenceTable::new(out))
}

/// The bundled measured table as a 4x4 nested list.
#[pyfunction]
fn table1() -> Vec<Vec<u64>> {
    fixtures::table1().counts.iter().map(|r| r.to_vec()).collect()
}

#[pyfunction]
fn qber_from_counts(py: Python<'_>, counts: Vec<Vec<u64>>) -> PyResult<Py<PyAny>> {
    let report = protocol::qber_from_counts(&table_from(counts)?).map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (counts, p_resend = 0.5))]
fn qber_with_eve_prediction(py: Python<'_>, counts: Vec<Vec<u64>>, p_resend: f64) -> PyResult<Py<PyAny>> {
    let report = protocol::qber_with_eve_prediction(&table_from(counts)?, p_resend).map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn duan_check(py: Python<'_>, var_x: Vec<f64>, var_p: Vec<f64>) -> PyResult<Py<PyAny>> {
    let r = analysis::duan_check_values(&var_x, &var_p).map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn poisson_errors(counts: Vec<u64>) -> Vec<f64> {
    analysis::poisson_errors(&counts)
}

#[pyfunction]
fn fit_gaussian(py: Python<'_>, positions_mm: Vec<f64>, counts: Vec<f64>) -> PyResult<Py<PyAny>> {
    let fit = analysis::fit_gaussian_points(&positions_mm, &counts).map_err(py_err)?;
    to_py(py, &fit)
}

#[pyfunction]
fn parse_grid(spec: &str) -> PyResult<Vec<f64>> {
    analysis::parse_grid(spec).map_err(py_err)
}

/// Whether the given widths describe a physical source, and its EPR product.
#[pyfunction]
fn check_source(sigma_minus: f64, sigma_plus: f64, kappa_minus: f64, kappa_plus: f64) -> PyResult<(bool, f64)> {
    let pump = PumpProfile::new(2.0).map_err(py_err)?;
    let s = epr_qkd::source::SourceModel::new(sigma_minus, sigma_plus, kappa_minus, kappa_plus, pump).map_err(py_err)?;
    Ok((s.is_entangled(), s.epr_product()))
}

/// A calibrated source with both stations, ready to simulate.
#[pyclass(frozen)]
struct Experiment {
    setup: Setup,
}

#[pymethods]
impl Experiment {
    /// Builds from configuration text (`section.key = value` lines); empty text gives the defaults.
    #[new]
    #[pyo3(signature = (config_text = ""))]
    fn new(config_text: &str) -> PyResult<Self> {
        let cfg = RunConfig::from_toml_str(config_text).map_err(py_err)?;
        Ok(Experiment { setup: cfg.build_setup().map_err(py_err)? })
    }

    fn source(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.setup.source)
    }

    /// Coincidence probabilities per pair, rows Ax1..Ap2, columns Bx1..Bp2.
    fn coincidence_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        let m = detection::coincidence_matrix(&self.setup.source, &self.setup.alice, &self.setup.bob).map_err(py_err)?;
        Ok(m.iter().map(|r| r.to_vec()).collect())
    }

    #[pyo3(signature = (coincidences, estimation_pairs, seed, attack = "none", qber_threshold = 0.15))]
    fn run_session(
        &self,
        py: Python<'_>,
        coincidences: usize,
        estimation_pairs: usize,
        seed: u64,
        attack: &str,
        qber_threshold: f64,
    ) -> PyResult<Py<PyAny>> {
        let policy: BasisPolicy = attack.parse().map_err(py_err)?;
        let session = SessionConfig::new(coincidences, estimation_pairs, qber_threshold, seed).map_err(py_err)?;
        let attack = AttackConfig::intercept_resend(policy);
        let s = &self.setup;
        let r = py
            .detach(|| protocol::run_session(&s.source, &s.alice, &s.bob, &session, Some(&attack)))
            .map_err(py_err)?;
        to_py(py, &r)
    }

    /// Simulated scan of Bob's slit with Alice's `fixed` detector (e.g. "Ax1").
    #[pyo3(signature = (fixed, scanned, grid = "0:3:0.1", pairs_per_point = 200_000, seed = 42))]
    fn scan(
        &self,
        py: Python<'_>,
        fixed: &str,
        scanned: &str,
        grid: &str,
        pairs_per_point: u64,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<u64>)> {
        let spec = ScanSpec {
            fixed_detector: fixed.parse::<DetectorLabel>().map_err(py_err)?,
            scanned_basis: scanned.parse::<Basis>().map_err(py_err)?,
            grid_mm: analysis::parse_grid(grid).map_err(py_err)?,
            pairs_per_point,
            seed,
        };
        let s = &self.setup;
        let scan = py
            .detach(|| analysis::scan_simulation(&s.source, &s.alice, &s.bob, &spec))
            .map_err(py_err)?;
        Ok((scan.positions_mm, scan.counts))
    }
}

#[pymodule]
fn epr_qkd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(qber_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(qber_with_eve_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(duan_check, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_errors, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(parse_grid, m)?)?;
    m.add_function(wrap_pyfunction!(check_source, m)?)?;
    m.add_class::<Experiment>()?;
    Ok(())
}
