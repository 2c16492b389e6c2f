//! Python bindings for the simulator core.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyKeyError, PyValueError};
use pyo3::prelude::*;

use ptp_core::fib::{self, FibEntry};
use ptp_core::harness::{self, FlowRef, HarnessError};
use ptp_core::mpccp::law;
use ptp_core::names::{ContentName, FaceId, FlowName};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn flow(s: &str) -> PyResult<FlowName> {
    s.parse().map_err(value_err)
}

fn content(s: &str) -> PyResult<ContentName> {
    s.parse().map_err(value_err)
}

fn entry_tuple(e: &FibEntry) -> (String, Vec<FaceId>) {
    (e.prefix.to_string(), e.faces.clone())
}

/// Flow part of a packet name (everything but the sequence component).
#[pyfunction]
fn flow_name_of(name: &str) -> PyResult<String> {
    Ok(content(name)?.flow_name().to_string())
}

#[pyfunction]
fn sequence_of(name: &str) -> PyResult<u64> {
    content(name)?.sequence().map_err(value_err)
}

#[pyfunction]
fn packet_name(flow_name: &str, seq: u64) -> PyResult<String> {
    Ok(flow(flow_name)?.packet(seq).to_string())
}

/// Label stack of face ids; the last element is the top.
#[pyclass(name = "Tag", eq, hash, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyTag(ptp_core::names::Tag);

#[pymethods]
impl PyTag {
    #[new]
    #[pyo3(signature = (faces = Vec::new()))]
    fn new(faces: Vec<FaceId>) -> Self {
        PyTag(ptp_core::names::Tag::from_stack(faces))
    }

    #[getter]
    fn faces(&self) -> Vec<FaceId> {
        self.0.as_slice().to_vec()
    }

    fn top(&self) -> Option<FaceId> {
        self.0.top()
    }

    fn pushed(&self, face: FaceId) -> Self {
        PyTag(self.0.pushed(face))
    }

    /// Returns (top face, remaining tag).
    fn popped(&self) -> PyResult<(FaceId, PyTag)> {
        let (f, rest) = self.0.popped().map_err(|e| PyIndexError::new_err(e.to_string()))?;
        Ok((f, PyTag(rest)))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Tag({:?})", self.0.as_slice())
    }
}

#[pyclass(name = "Fib")]
#[derive(Default)]
struct PyFib(fib::Fib);

#[pymethods]
impl PyFib {
    #[new]
    fn new() -> Self {
        PyFib::default()
    }

    fn insert(&mut self, prefix: &str, faces: Vec<FaceId>) -> PyResult<()> {
        self.0.insert(flow(prefix)?, faces).map(|_| ()).map_err(value_err)
    }

    fn remove(&mut self, prefix: &str) -> PyResult<bool> {
        Ok(self.0.remove(&flow(prefix)?).is_some())
    }

    /// Longest-prefix match: (prefix, faces) or None.
    fn lpm(&self, name: &str) -> PyResult<Option<(String, Vec<FaceId>)>> {
        Ok(self.0.lpm(&content(name)?).map(entry_tuple))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "FabTable")]
struct PyFabTable(fib::FabTable);

#[pymethods]
impl PyFabTable {
    #[new]
    #[pyo3(signature = (capacity = fib::DEFAULT_FAB_CAPACITY))]
    fn new(capacity: usize) -> PyResult<Self> {
        if capacity == 0 {
            return Err(PyValueError::new_err("capacity must be positive"));
        }
        Ok(PyFabTable(fib::FabTable::new(capacity)))
    }

    /// Resolves `name` through this table, falling back to LPM on `fib`.
    fn resolve(&mut self, fib: PyRef<'_, PyFib>, name: &str) -> PyResult<Option<(String, Vec<FaceId>)>> {
        Ok(fib::resolve(&fib.0, &mut self.0, &content(name)?).map(entry_tuple))
    }

    fn contains(&self, flow_name: &str) -> PyResult<bool> {
        Ok(self.0.contains(&flow(flow_name)?))
    }

    /// Flow names from most to least recently used.
    fn flows(&self) -> Vec<String> {
        self.0.flows_by_recency().map(|f| f.to_string()).collect()
    }

    /// (hits, misses, evictions, stale)
    fn stats(&self) -> (u64, u64, u64, u64) {
        let s = self.0.stats();
        (s.hits, s.misses, s.evictions, s.stale)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn check_windows(cwnds: &[f64], rtts: &[f64]) -> PyResult<()> {
    if cwnds.is_empty() || cwnds.len() != rtts.len() {
        return Err(PyValueError::new_err("cwnds and rtts must be non-empty and of equal length"));
    }
    if cwnds.iter().chain(rtts).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(PyValueError::new_err("windows and RTTs must be positive"));
    }
    Ok(())
}

#[pyfunction]
fn alpha(cwnds: Vec<f64>, rtts: Vec<f64>) -> PyResult<f64> {
    check_windows(&cwnds, &rtts)?;
    Ok(law::alpha(&cwnds, &rtts))
}

#[pyfunction]
#[pyo3(signature = (cwnds, rtts, path, rtt_ratio = 1.0))]
fn increment(cwnds: Vec<f64>, rtts: Vec<f64>, path: usize, rtt_ratio: f64) -> PyResult<f64> {
    check_windows(&cwnds, &rtts)?;
    if path >= cwnds.len() {
        return Err(PyIndexError::new_err("path out of range"));
    }
    Ok(law::increment(&cwnds, &rtts, path, rtt_ratio))
}

#[pyfunction]
#[pyo3(signature = (cwnd, beta = 0.75, cwnd_min = 1.0))]
fn decrease(cwnd: f64, beta: f64, cwnd_min: f64) -> f64 {
    law::decrease(cwnd, beta, cwnd_min)
}

#[pyfunction]
fn builtin_scenarios() -> Vec<&'static str> {
    harness::builtin_names().collect()
}

fn harness_err(e: HarnessError) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        pyo3::exceptions::PyRuntimeError::new_err(e.to_string())
    }
}

/// Result of one scenario run.
#[pyclass(name = "Outcome", frozen)]
struct PyOutcome(harness::Outcome);

impl PyOutcome {
    fn node(&self, label: &str) -> PyResult<usize> {
        self.0
            .scenario
            .node_index(label)
            .ok_or_else(|| PyKeyError::new_err(format!("no node {label:?}")))
    }
}

#[pymethods]
impl PyOutcome {
    #[getter]
    fn name(&self) -> String {
        self.0.scenario.name.clone()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.0.passed()
    }

    /// (name, passed, detail) per expectation.
    #[getter]
    fn checks(&self) -> Vec<(String, bool, String)> {
        self.0
            .checks
            .iter()
            .chain(&self.0.wall_check)
            .map(|c| (c.name.clone(), c.passed, c.detail.clone()))
            .collect()
    }

    #[getter]
    fn events(&self) -> u64 {
        self.0.events
    }

    #[getter]
    fn wall_secs(&self) -> f64 {
        self.0.wall.as_secs_f64()
    }

    fn report_text(&self) -> String {
        self.0.report_text()
    }

    fn links_csv(&self) -> String {
        self.0.report.links_csv()
    }

    fn flows_csv(&self) -> String {
        self.0.report.flows_csv()
    }

    fn paths_csv(&self) -> String {
        self.0.report.paths_csv()
    }

    fn routers_csv(&self) -> String {
        self.0.report.routers_csv()
    }

    /// Data utilization (%) of the direction `src -> dst` over the
    /// measurement window; node ids as in the scenario file.
    fn utilization(&self, src: &str, dst: &str) -> PyResult<f64> {
        let (a, b) = (self.node(src)?, self.node(dst)?);
        harness::utilization(&self.0.report, a, b).ok_or_else(|| PyKeyError::new_err(format!("no link {src}-{dst}")))
    }

    /// Goodput (bits/s) of a consumer flow over `[start, end)`, by default
    /// the measurement window.
    #[pyo3(signature = (consumer, flow = 0, start = None, end = None))]
    fn goodput(&self, consumer: &str, flow: usize, start: Option<f64>, end: Option<f64>) -> PyResult<f64> {
        let r = FlowRef {
            node: consumer.to_string(),
            flow,
        };
        let idx = self
            .0
            .scenario
            .flow_index(&r)
            .ok_or_else(|| PyKeyError::new_err(format!("no flow {flow} at {consumer:?}")))?;
        let (a, b) = self.0.report.window();
        Ok(self.0.report.flow_goodput(idx, start.unwrap_or(a), end.unwrap_or(b)))
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.0.write(&dir).map_err(harness_err)
    }
}

/// Runs a built-in scenario or scenario file. `overrides` are `key=value`
/// strings as accepted by the command line.
#[pyfunction]
#[pyo3(signature = (scenario, overrides = Vec::new()))]
fn run_scenario(py: Python<'_>, scenario: &str, overrides: Vec<String>) -> PyResult<PyOutcome> {
    let out = py.detach(|| harness::run_scenario(scenario, &overrides));
    out.map(PyOutcome).map_err(harness_err)
}

#[pymodule]
fn ptp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTag>()?;
    m.add_class::<PyFib>()?;
    m.add_class::<PyFabTable>()?;
    m.add_class::<PyOutcome>()?;
    m.add_function(wrap_pyfunction!(flow_name_of, m)?)?;
    m.add_function(wrap_pyfunction!(sequence_of, m)?)?;
    m.add_function(wrap_pyfunction!(packet_name, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(increment, m)?)?;
    m.add_function(wrap_pyfunction!(decrease, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
