//! Python bindings: metrics, fits, calibration, sampling and the seeded
//! mock pipeline. Structured results cross the boundary as JSON text.

use std::path::PathBuf;

use gradeguard::backends::{BackendConfig, MockBackend, MockProfile};
use gradeguard::corpus::{self, CleaningRules};
use gradeguard::irm::{self, ThresholdMode};
use gradeguard::metrics::{self, ScoredItem};
use gradeguard::pipeline::{run_pipeline, PipelineSettings};
use gradeguard::prompting::PromptTemplate;
use gradeguard::synthetic::{self, SyntheticSpec};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json(v: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(v).map_err(value_err)
}

fn mode(name: &str) -> PyResult<ThresholdMode> {
    match name {
        "ncal-inflection" => Ok(ThresholdMode::NcalInflection),
        "scal-minimum" => Ok(ThresholdMode::ScalMinimum),
        _ => Err(value_err(format!("unknown threshold mode {name:?}"))),
    }
}

#[pyfunction]
fn mean_grade(grades: Vec<f64>) -> PyResult<f64> {
    metrics::mean_grade(&grades).map_err(value_err)
}

/// Bessel-corrected sd of the grades divided by 10.
#[pyfunction]
fn indecisiveness_score(grades: Vec<f64>) -> PyResult<f64> {
    metrics::indecisiveness_score(&grades).map_err(value_err)
}

#[pyfunction]
fn population_sd(values: Vec<f64>) -> PyResult<f64> {
    metrics::population_sd(&values).map_err(value_err)
}

/// `pairs` are (predicted, true).
#[pyfunction]
fn rmse(pairs: Vec<(f64, f64)>) -> PyResult<f64> {
    metrics::rmse(&pairs).map_err(value_err)
}

#[pyfunction]
fn mae(pairs: Vec<(f64, f64)>) -> PyResult<f64> {
    metrics::mae(&pairs).map_err(value_err)
}

#[pyclass(name = "ScoredItem", frozen, from_py_object)]
#[derive(Clone)]
struct PyScoredItem {
    inner: ScoredItem,
}

#[pymethods]
impl PyScoredItem {
    #[new]
    fn new(true_grade: f64, mean_grade: f64, indecisiveness_score: f64) -> Self {
        Self { inner: ScoredItem::new(true_grade, mean_grade, indecisiveness_score) }
    }

    #[getter]
    fn true_grade(&self) -> f64 {
        self.inner.true_grade
    }

    #[getter]
    fn mean_grade(&self) -> f64 {
        self.inner.mean_grade
    }

    #[getter]
    fn indecisiveness_score(&self) -> f64 {
        self.inner.indecisiveness_score
    }

    fn __repr__(&self) -> String {
        format!(
            "ScoredItem(true_grade={}, mean_grade={}, indecisiveness_score={})",
            self.inner.true_grade, self.inner.mean_grade, self.inner.indecisiveness_score
        )
    }
}

fn unwrap_items(items: &[PyScoredItem]) -> Vec<ScoredItem> {
    items.iter().map(|i| i.inner).collect()
}

/// (N_k, E_k) over items with IS <= threshold; E_k is None when N_k = 0.
#[pyfunction]
fn confident_rmse(items: Vec<PyScoredItem>, threshold: f64) -> (usize, Option<f64>) {
    let c = metrics::confident_rmse(&unwrap_items(&items), threshold);
    (c.n_k, c.e_k)
}

#[pyclass(name = "LogisticFit", frozen)]
struct PyLogisticFit {
    inner: irm::LogisticFit,
}

#[pymethods]
impl PyLogisticFit {
    #[getter]
    fn l(&self) -> f64 {
        self.inner.l
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }

    #[getter]
    fn flat(&self) -> bool {
        self.inner.flat
    }

    #[getter]
    fn residual_rms(&self) -> f64 {
        self.inner.residual_rms
    }

    fn eval(&self, x: f64) -> f64 {
        self.inner.eval(x)
    }

    fn __repr__(&self) -> String {
        format!("LogisticFit(l={}, k={}, t0={})", self.inner.l, self.inner.k, self.inner.t0)
    }
}

#[pyfunction]
fn fit_logistic(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<PyLogisticFit> {
    irm::fit_logistic(&xs, &ys).map(|inner| PyLogisticFit { inner }).map_err(value_err)
}

/// Least-squares quartic; returns coefficients c0..c4 (ascending powers).
#[pyfunction]
fn fit_poly4(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<Vec<f64>> {
    irm::fit_poly4(&xs, &ys).map(|f| f.coefficients.to_vec()).map_err(value_err)
}

#[pyclass(name = "CalibrationResult", frozen)]
struct PyCalibration {
    inner: irm::CalibrationResult,
}

#[pymethods]
impl PyCalibration {
    #[getter]
    fn optimal_is_scal(&self) -> f64 {
        self.inner.optimal_is_scal
    }

    #[getter]
    fn optimal_is_ncal(&self) -> f64 {
        self.inner.optimal_is_ncal
    }

    #[getter]
    fn ncal_fallback(&self) -> bool {
        self.inner.ncal_fallback
    }

    /// `"ncal-inflection"` or `"scal-minimum"`.
    #[pyo3(signature = (mode_name = "ncal-inflection"))]
    fn threshold(&self, mode_name: &str) -> PyResult<f64> {
        Ok(self.inner.threshold(mode(mode_name)?))
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }
}

#[pyfunction]
#[pyo3(signature = (items, grid = None, exclusion_cutoff = irm::DEFAULT_EXCLUSION_CUTOFF))]
fn calibrate(items: Vec<PyScoredItem>, grid: Option<Vec<f64>>, exclusion_cutoff: f64) -> PyResult<PyCalibration> {
    let grid = grid.unwrap_or_else(irm::default_threshold_grid);
    irm::calibrate(&unwrap_items(&items), &grid, exclusion_cutoff)
        .map(|inner| PyCalibration { inner })
        .map_err(value_err)
}

#[pyclass(name = "Corpus", frozen)]
struct PyCorpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        corpus::load_corpus(&path).map(|inner| Self { inner }).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn record_ids(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.record_id.clone()).collect()
    }

    fn question_ids(&self) -> Vec<String> {
        self.inner.question_ids().into_iter().map(String::from).collect()
    }

    fn true_grades(&self) -> Vec<f64> {
        self.inner.records().iter().map(|r| r.true_grade).collect()
    }

    fn clean(&self) -> Self {
        Self { inner: corpus::clean_corpus(&self.inner, &CleaningRules::default()) }
    }

    /// Score-stratified sample: at most one record per (question, band).
    fn sbus_sample(&self, seed: u64) -> Self {
        Self { inner: corpus::sbus_sample(&self.inner, seed) }
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

/// Seeded heteroscedastic corpus; returns (corpus, mock profile JSON,
/// high-noise record ids).
#[pyfunction]
#[pyo3(signature = (records = 500, high_noise_fraction = 0.2, low_noise_sd = 0.3, high_noise_sd = 1.5, seed = 2024))]
fn synthetic_corpus(
    records: usize,
    high_noise_fraction: f64,
    low_noise_sd: f64,
    high_noise_sd: f64,
    seed: u64,
) -> PyResult<(PyCorpus, String, Vec<String>)> {
    let spec =
        SyntheticSpec { records, high_noise_fraction, low_noise_sd, high_noise_sd, seed, ..SyntheticSpec::default() };
    let (inner, profile, high) = synthetic::heteroscedastic(&spec);
    Ok((PyCorpus { inner }, to_json(&profile)?, high))
}

/// Full pipeline against the seeded mock grader; returns the run report as
/// JSON. `profile_json` defaults to the built-in mock profile.
#[pyfunction]
#[pyo3(signature = (corpus, profile_json = None, seed = 0, t = 10, threshold_mode = "ncal-inflection"))]
fn run_mock_pipeline(
    py: Python<'_>,
    corpus: &PyCorpus,
    profile_json: Option<&str>,
    seed: u64,
    t: usize,
    threshold_mode: &str,
) -> PyResult<String> {
    let profile: MockProfile = match profile_json {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => MockProfile::default(),
    };
    profile.validate().map_err(value_err)?;
    let settings = PipelineSettings { seed, t, threshold_mode: mode(threshold_mode)?, ..PipelineSettings::default() };
    let c = &corpus.inner;
    let out = py.detach(|| {
        let backend = MockBackend::new(profile, seed, c.truths());
        run_pipeline(c, &backend, &BackendConfig::default(), &PromptTemplate::default(), &settings)
    });
    to_json(&out.map_err(value_err)?.report)
}

#[pymodule(name = "gradeguard")]
fn gradeguard_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mean_grade, m)?)?;
    m.add_function(wrap_pyfunction!(indecisiveness_score, m)?)?;
    m.add_function(wrap_pyfunction!(population_sd, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(confident_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_poly4, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_mock_pipeline, m)?)?;
    m.add_class::<PyScoredItem>()?;
    m.add_class::<PyLogisticFit>()?;
    m.add_class::<PyCalibration>()?;
    m.add_class::<PyCorpus>()?;
    Ok(())
}
