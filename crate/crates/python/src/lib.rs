use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use colorcode::circuit::{build_extraction_round, single_fault_audit};
use colorcode::decoder::{is_logical_failure, DecodeResult, Decoder};
use colorcode::experiments::{fit_dataset, NoiseModel, TrialConfig, TrialDataset, TrialRecord};
use colorcode::lattice::{build_lattice, validate, CodeLattice};
use colorcode::matching::{min_weight_perfect_matching_raw, MatchingEdge};
use colorcode::noise::{syndrome_of_bits, ErrorState, Pauli};

fn to_py(e: colorcode::Error) -> PyErr {
    match e {
        colorcode::Error::InvalidDistance(_)
        | colorcode::Error::InvalidProbability(_)
        | colorcode::Error::InvalidArgument(_)
        | colorcode::Error::OddNodeCount(_)
        | colorcode::Error::FitPrecondition(_)
        | colorcode::Error::Dataset(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn check_len(name: &str, got: usize, want: usize) -> PyResult<()> {
    if got != want {
        return Err(PyValueError::new_err(format!("{name} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Triangular 4.8.8 color code of odd distance `d`.
#[pyclass(name = "Lattice", frozen)]
struct PyLattice {
    inner: Arc<CodeLattice>,
}

#[pymethods]
impl PyLattice {
    #[new]
    fn new(d: usize) -> PyResult<Self> {
        Ok(PyLattice {
            inner: Arc::new(build_lattice(d).map_err(to_py)?),
        })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Face supports in cyclic order.
    #[getter]
    fn faces(&self) -> Vec<Vec<usize>> {
        self.inner.faces.iter().map(|f| f.support.clone()).collect()
    }

    #[getter]
    fn face_colors(&self) -> Vec<String> {
        self.inner.faces.iter().map(|f| f.color.to_string()).collect()
    }

    #[getter]
    fn logical_x(&self) -> Vec<usize> {
        self.inner.logical_x.clone()
    }

    #[getter]
    fn logical_z(&self) -> Vec<usize> {
        self.inner.logical_z.clone()
    }

    #[getter]
    fn apex(&self) -> usize {
        self.inner.apex
    }

    /// Names of failed structural checks; empty when the lattice is valid.
    fn validate(&self) -> Vec<String> {
        validate(&self.inner).failures().iter().map(|c| c.name.clone()).collect()
    }

    /// Parity of `bits` over every face.
    fn syndrome(&self, bits: Vec<bool>) -> PyResult<Vec<bool>> {
        check_len("bits", bits.len(), self.inner.n())?;
        Ok(syndrome_of_bits(&self.inner, &bits))
    }

    /// Whether `errors ^ correction` is a nontrivial logical operator.
    fn is_logical_failure(&self, errors: Vec<bool>, correction: Vec<usize>) -> PyResult<bool> {
        check_len("errors", errors.len(), self.inner.n())?;
        let mut e = ErrorState::clean(self.inner.n());
        e.x_errors = errors;
        is_logical_failure(&self.inner, &e, &correction, Pauli::X).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Lattice(d={}, n={}, faces={})", self.inner.d, self.inner.n(), self.inner.faces.len())
    }
}

fn result_dict<'py>(py: Python<'py>, r: &DecodeResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("correction", r.correction.clone())?;
    d.set_item("matched_edges", r.matched_edges.to_vec())?;
    d.set_item("region_weight", r.region_weight)?;
    d.set_item("complement_weight", r.complement_weight)?;
    Ok(d)
}

/// Matching decoder bound to one lattice.
#[pyclass(name = "Decoder", frozen)]
struct PyDecoder {
    inner: Decoder,
}

#[pymethods]
impl PyDecoder {
    #[new]
    fn new(lattice: &PyLattice) -> Self {
        PyDecoder {
            inner: Decoder::new(lattice.inner.clone()),
        }
    }

    /// Decodes one perfectly measured syndrome.
    fn decode_2d<'py>(&self, py: Python<'py>, syndrome: Vec<bool>) -> PyResult<Bound<'py, PyDict>> {
        check_len("syndrome", syndrome.len(), self.inner.lattice().faces.len())?;
        let r = py.detach(|| self.inner.decode_2d(&syndrome)).map_err(to_py)?;
        result_dict(py, &r)
    }

    /// Decodes a history of syndromes whose last round is perfect.
    fn decode_3d<'py>(&self, py: Python<'py>, history: Vec<Vec<bool>>) -> PyResult<Bound<'py, PyDict>> {
        let nf = self.inner.lattice().faces.len();
        for row in &history {
            check_len("history row", row.len(), nf)?;
        }
        let r = py.detach(|| self.inner.decode_3d(&history)).map_err(to_py)?;
        result_dict(py, &r)
    }
}

/// Exact minimum-weight perfect matching on `n` nodes.
#[pyfunction]
fn min_weight_perfect_matching(n: usize, edges: Vec<(usize, usize, u64)>) -> PyResult<(Vec<(usize, usize)>, u64)> {
    let edges: Vec<MatchingEdge> = edges.into_iter().map(|(a, b, weight)| MatchingEdge { a, b, weight }).collect();
    if edges.iter().any(|e| e.a >= n || e.b >= n || e.a == e.b) {
        return Err(PyValueError::new_err("edge endpoints must be distinct nodes below n"));
    }
    let m = min_weight_perfect_matching_raw(n, &edges).map_err(to_py)?;
    Ok((m.pairs, m.total_weight))
}

/// Monte Carlo point; returns `(failures_x, failures_z)`.
#[pyfunction]
#[pyo3(signature = (model, d, p, trials, seed, rounds=None, p_identity_ratio=1.0))]
fn run_trials(
    py: Python<'_>,
    model: &str,
    d: usize,
    p: f64,
    trials: u64,
    seed: u64,
    rounds: Option<usize>,
    p_identity_ratio: f64,
) -> PyResult<(u64, u64)> {
    let model: NoiseModel = model.parse().map_err(to_py)?;
    let cfg = TrialConfig {
        rounds,
        p_identity_ratio,
        ..TrialConfig::new(model, d, p, trials, seed)
    };
    let r = py.detach(|| colorcode::experiments::run_trials(&cfg)).map_err(to_py)?;
    Ok((r.failures_x, r.failures_z))
}

/// Fits the scaling ansatz to `(d, p, trials, failures)` rows of one model.
#[pyfunction]
fn fit_threshold<'py>(py: Python<'py>, model: &str, rows: Vec<(usize, f64, u64, u64)>) -> PyResult<Bound<'py, PyDict>> {
    let model: NoiseModel = model.parse().map_err(to_py)?;
    let records = rows
        .into_iter()
        .map(|(d, p, trials, f)| TrialRecord {
            model,
            d,
            p,
            trials,
            failures_x: f,
            failures_z: f,
            failures_any: None,
        })
        .collect();
    let ds = TrialDataset::new(records).map_err(to_py)?;
    let fit = fit_dataset(&ds).map_err(to_py)?;
    let f = fit.limiting_fit();
    let out = PyDict::new(py);
    out.set_item("p_th", fit.threshold)?;
    out.set_item("p_th_err", f.std_errors[3])?;
    out.set_item("nu", f.params.nu)?;
    out.set_item("a", f.params.a)?;
    out.set_item("b", f.params.b)?;
    out.set_item("c", f.params.c)?;
    out.set_item("r_squared", f.r_squared)?;
    out.set_item("accepted", fit.accepted())?;
    Ok(out)
}

/// Exhaustive single-fault audit of one extraction round; returns
/// `(faults, violations)`.
#[pyfunction]
fn circuit_audit(d: usize) -> PyResult<(usize, usize)> {
    let lat = build_lattice(d).map_err(to_py)?;
    let c = build_extraction_round(&lat);
    let r = single_fault_audit(&lat, &c).map_err(to_py)?;
    Ok((r.faults, r.violations.len()))
}

#[pymodule(name = "colorcode")]
fn colorcode_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PyDecoder>()?;
    m.add_function(wrap_pyfunction!(min_weight_perfect_matching, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(fit_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(circuit_audit, m)?)?;
    Ok(())
}
