//! Python bindings: designs, trial data, estimation, diagnostics and simulation.
//!
//! Structured results cross the boundary as plain dicts and lists.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;
use swedge_core::data::{Record, TrialDataset};
use swedge_core::ht::PairTables;
use swedge_core::inference::{AffineStatistic, Reference};
use swedge_core::method::{Estimator, Method, VarianceKind};
use swedge_core::sim::{self, SimScenario};
use swedge_core::{diagnostics, StepWedgeDesign};

create_exception!(swedge, SwedgeError, PyValueError, "Raised when a computation declines or input is invalid.");

fn err(e: swedge_core::Error) -> PyErr {
    SwedgeError::new_err(e.to_string())
}

/// Converts any serializable value to native Python objects via the `json` module.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SwedgeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: std::str::FromStr<Err = swedge_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// A stepped-wedge rollout: `I` clusters, cumulative treated counts for periods `1..=J`.
#[pyclass(name = "Design", module = "swedge", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDesign(StepWedgeDesign);

#[pymethods]
impl PyDesign {
    #[new]
    fn new(num_clusters: usize, cumulative_treated: Vec<usize>) -> PyResult<Self> {
        StepWedgeDesign::new(num_clusters, cumulative_treated).map(PyDesign).map_err(err)
    }

    #[staticmethod]
    fn one_at_a_time(rollout_periods: usize) -> PyResult<Self> {
        StepWedgeDesign::one_at_a_time(rollout_periods).map(PyDesign).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        StepWedgeDesign::from_json_str(text).map(PyDesign).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json_string()
    }

    #[getter]
    fn num_clusters(&self) -> usize {
        self.0.num_clusters()
    }

    #[getter]
    fn num_rollout_periods(&self) -> usize {
        self.0.num_rollout_periods()
    }

    #[getter]
    fn cumulative_treated(&self) -> Vec<usize> {
        self.0.cumulative_treated().to_vec()
    }

    fn is_one_at_a_time(&self) -> bool {
        self.0.is_one_at_a_time()
    }

    /// `P(Z_ij = 1)` as a float.
    fn propensity(&self, period: usize) -> PyResult<f64> {
        self.0.propensity(period).map(|p| p.value()).map_err(err)
    }

    /// `P(Z_ij = 1)` as an exact fraction string such as `"1/11"`.
    fn propensity_exact(&self, period: usize) -> PyResult<String> {
        self.0.propensity(period).map(|p| p.exact().to_string()).map_err(err)
    }

    /// Number of distinct assignments, or `None` if it overflows 128 bits.
    fn assignment_count(&self) -> Option<u128> {
        self.0.assignment_count()
    }

    /// Adoption period of each cluster under one random assignment.
    fn sample_assignment(&self, seed: u64) -> Vec<usize> {
        self.0.sample_assignment(seed).adoption_times().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Design(num_clusters={}, cumulative_treated={:?})", self.0.num_clusters(), self.0.cumulative_treated())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

/// Individual-level trial records tied to a design.
#[pyclass(name = "Dataset", module = "swedge", frozen)]
struct PyDataset(TrialDataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn read_csv(path: &str, design: &PyDesign) -> PyResult<Self> {
        TrialDataset::ingest_csv(path, design.0.clone()).map(PyDataset).map_err(err)
    }

    /// Builds a dataset from equal-length columns. `covariates` maps names to columns.
    #[staticmethod]
    #[pyo3(signature = (design, cluster, period, z, d, y, covariates=None))]
    fn from_columns(
        design: &PyDesign,
        cluster: Vec<i64>,
        period: Vec<usize>,
        z: Vec<bool>,
        d: Vec<f64>,
        y: Vec<f64>,
        covariates: Option<BTreeMap<String, Vec<f64>>>,
    ) -> PyResult<Self> {
        let n = cluster.len();
        let covariates = covariates.unwrap_or_default();
        let mut lengths = [period.len(), z.len(), d.len(), y.len()].into_iter().chain(covariates.values().map(Vec::len));
        if lengths.any(|m| m != n) {
            return Err(SwedgeError::new_err("all columns must have the same length"));
        }
        let names: Vec<String> = covariates.keys().cloned().collect();
        let records = (0..n)
            .map(|k| Record {
                cluster: cluster[k],
                period: period[k],
                z: z[k],
                d: d[k],
                y: y[k],
                x: covariates.values().map(|c| c[k]).collect(),
            })
            .collect();
        TrialDataset::new(design.0.clone(), names, records).map(PyDataset).map_err(err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.0.export_csv(path).map_err(err)
    }

    #[getter]
    fn design(&self) -> PyDesign {
        PyDesign(self.0.design().clone())
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.0.covariate_names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(records={}, covariates={:?})", self.0.len(), self.0.covariate_names())
    }
}

/// The affine statistic `tau(lambda) = intercept - lambda * slope` with its variance surface.
#[pyclass(name = "Statistic", module = "swedge", frozen)]
struct PyStatistic(AffineStatistic);

#[pymethods]
impl PyStatistic {
    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept
    }

    #[getter]
    fn slope(&self) -> f64 {
        self.0.slope
    }

    /// Degrees of freedom of the `t` reference, `None` for the Gaussian one.
    #[getter]
    fn df(&self) -> Option<f64> {
        self.0.df()
    }

    fn lambda_hat(&self) -> PyResult<f64> {
        self.0.lambda_hat().map_err(err)
    }

    fn tau(&self, lam: f64) -> f64 {
        self.0.tau(lam)
    }

    fn variance_at(&self, lam: f64) -> f64 {
        self.0.variance_at(lam)
    }

    fn test<'py>(&self, py: Python<'py>, lambda0: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.test(lambda0).map_err(err)?)
    }

    fn rejects(&self, lambda0: f64, alpha: f64) -> PyResult<bool> {
        self.0.rejects(lambda0, alpha).map_err(err)
    }

    /// The confidence set at level `1 - alpha`, e.g. `{"type": "bounded", "lo": .., "hi": ..}`.
    fn interval<'py>(&self, py: Python<'py>, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.interval(alpha).map_err(err)?)
    }
}

/// An estimator with its variance and reference distribution; omitted parts take defaults.
#[pyclass(name = "Method", module = "swedge", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMethod(Method);

#[pymethods]
impl PyMethod {
    #[new]
    #[pyo3(signature = (estimator, variance=None, reference=None))]
    fn new(estimator: &str, variance: Option<&str>, reference: Option<&str>) -> PyResult<Self> {
        let e: Estimator = parse(estimator)?;
        let v: VarianceKind = variance.map(parse).transpose()?.unwrap_or_else(|| e.default_variance());
        let r: Reference = reference.map(parse).transpose()?.unwrap_or_else(|| e.default_reference());
        Method::new(e, v, r).map(PyMethod).map_err(err)
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label()
    }

    fn statistic(&self, data: &PyDataset) -> PyResult<PyStatistic> {
        let tables = PairTables::new(data.0.design());
        self.0.statistic(&data.0, &tables).map(PyStatistic).map_err(err)
    }

    /// Test of no intention-to-treat effect, computed from the outcome alone.
    fn itt_test<'py>(&self, py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
        let tables = PairTables::new(data.0.design());
        to_py(py, &self.0.itt_test(&data.0, &tables).map_err(err)?)
    }

    #[pyo3(signature = (data, alpha=0.05))]
    fn analyze<'py>(&self, py: Python<'py>, data: &PyDataset, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
        let tables = PairTables::new(data.0.design());
        to_py(py, &self.0.analyze(&data.0, &tables, alpha).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Method('{}')", self.0.label())
    }
}

/// Estimate and invert the test for one estimator, returning a summary dict.
#[pyfunction]
#[pyo3(signature = (data, estimator, variance=None, reference=None, alpha=0.05))]
fn analyze<'py>(
    py: Python<'py>,
    data: &PyDataset,
    estimator: &str,
    variance: Option<&str>,
    reference: Option<&str>,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    PyMethod::new(estimator, variance, reference)?.analyze(py, data, alpha)
}

/// Regressions of uptake and outcome on time since crossover, one per arm.
#[pyfunction]
fn duration_tests<'py>(py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &diagnostics::duration_tests(&data.0).map_err(err)?)
}

/// Covariate means, SDs and standardized differences by arm.
#[pyfunction]
#[pyo3(signature = (data, covariates=None))]
fn balance_table<'py>(py: Python<'py>, data: &PyDataset, covariates: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &diagnostics::balance_table(&data.0, &covariates.unwrap_or_default()).map_err(err)?)
}

/// Runs one simulation scenario given as a dict or JSON string.
#[pyfunction]
#[pyo3(signature = (scenario, threads=None))]
fn simulate<'py>(py: Python<'py>, scenario: &Bound<'py, PyAny>, threads: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let text: String = if scenario.is_instance_of::<PyDict>() {
        py.import("json")?.call_method1("dumps", (scenario,))?.extract()?
    } else {
        scenario.extract()?
    };
    let scenario: SimScenario = serde_json::from_str(&text).map_err(|e| SwedgeError::new_err(e.to_string()))?;
    scenario.validate().map_err(err)?;
    let report = py.detach(|| sim::run_cell_with_threads(&scenario, threads)).map_err(err)?;
    to_py(py, &report)
}

/// The study grid as a list of scenario dicts, ready for `simulate`.
#[pyfunction]
fn study_grid<'py>(py: Python<'py>, n_reps: usize, base_seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &SimScenario::study_grid(n_reps, base_seed, SimScenario::study_methods()))
}

#[pymodule]
fn swedge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SwedgeError", m.py().get_type::<SwedgeError>())?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyStatistic>()?;
    m.add_class::<PyMethod>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(duration_tests, m)?)?;
    m.add_function(wrap_pyfunction!(balance_table, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(study_grid, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
