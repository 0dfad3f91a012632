//! Python bindings: datasets, metrics, calibrators, sweeps, and generators.
//!
//! Components are passed as the same spec strings the command line accepts,
//! e.g. `lens="topk:1"`, `binning="adaptive:0.1"`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gc::analysis::{self, default_gamma_grid, SweepConfig};
use gc::calibrate::{self, Calibrator as CoreCalibrator, DEFAULT_HB_BIN_CHOICES};
use gc::io::{load_predictions, resolve_distance, resolve_lens, write_predictions};
use gc::synth::{self, GeneratorSpec};
use gc::{BinningSpec, DistanceSpec, LensSpec, PredictionRecord, ProbabilityVector, SelectorSpec};
use gece_core as gc;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_python<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated set of prediction records.
#[pyclass(module = "gece_py", skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: gc::Dataset,
}

#[pymethods]
impl Dataset {
    /// Builds a dataset from probability rows and integer labels.
    #[new]
    fn new(probs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        if probs.len() != labels.len() {
            return Err(err(format!(
                "{} probability rows but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        let records = probs
            .into_iter()
            .zip(labels)
            .map(|(p, y)| PredictionRecord::from_probs(ProbabilityVector::new(p, gc::data::INGEST_TOLERANCE)?, y))
            .collect::<gc::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Self {
            inner: gc::Dataset::new(records).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_logits(logits: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        if logits.len() != labels.len() {
            return Err(err(format!("{} logit rows but {} labels", logits.len(), labels.len())));
        }
        let records = logits
            .into_iter()
            .zip(labels)
            .map(|(z, y)| PredictionRecord::from_logits(z, y))
            .collect::<gc::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Self {
            inner: gc::Dataset::new(records).map_err(err)?,
        })
    }

    /// Reads a `.jsonl` or `.csv` prediction file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_predictions(&path, None).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_predictions(&self.inner, &path, None).map_err(err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    #[getter]
    fn probs(&self) -> Vec<Vec<f64>> {
        self.inner
            .records()
            .iter()
            .map(|r| r.probs().as_slice().to_vec())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, k={})", self.inner.len(), self.inner.k())
    }
}

struct Parts {
    lens: LensSpec,
    selector: SelectorSpec,
    distance: DistanceSpec,
}

fn parts(data: &Dataset, lens: &str, selector: &str, distance: &str) -> PyResult<Parts> {
    Ok(Parts {
        lens: resolve_lens(lens, data.inner.k()).map_err(err)?,
        selector: selector.parse().map_err(err)?,
        distance: resolve_distance(distance).map_err(err)?,
    })
}

/// Full metric result (value, selected count, per-bin means) as a dict.
#[pyfunction]
#[pyo3(signature = (dataset, lens="topk:1", selector="all", distance="tvd", binning="uniform:15"))]
fn gece_result<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    lens: &str,
    selector: &str,
    distance: &str,
    binning: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = parts(dataset, lens, selector, distance)?;
    let binning: BinningSpec = binning.parse().map_err(err)?;
    let r = gc::gece(&dataset.inner, &p.lens, &p.selector, &p.distance, &binning).map_err(err)?;
    to_python(py, &r)
}

#[pyfunction]
#[pyo3(signature = (dataset, lens="topk:1", selector="all", distance="tvd", binning="uniform:15"))]
fn gece(dataset: &Dataset, lens: &str, selector: &str, distance: &str, binning: &str) -> PyResult<f64> {
    let p = parts(dataset, lens, selector, distance)?;
    let binning: BinningSpec = binning.parse().map_err(err)?;
    Ok(gc::gece(&dataset.inner, &p.lens, &p.selector, &p.distance, &binning)
        .map_err(err)?
        .value)
}

/// Top-1 ECE with 15 uniform bins.
#[pyfunction]
fn traditional_ece(dataset: &Dataset) -> PyResult<f64> {
    Ok(gc::traditional_ece(&dataset.inner).map_err(err)?.value)
}

/// Fitted post-hoc calibrator.
#[pyclass(module = "gece_py", skip_from_py_object)]
#[derive(Clone)]
pub struct Calibrator {
    inner: CoreCalibrator,
}

#[pymethods]
impl Calibrator {
    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn apply(&self, dataset: &Dataset) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: calibrate::apply_calibrator(&self.inner, &dataset.inner).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.to_json()).unwrap()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(err)?;
        Ok(Self {
            inner: CoreCalibrator::from_json(&doc).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Calibrator({})",
            self.to_json().split_whitespace().collect::<Vec<_>>().join(" ")
        )
    }
}

/// Fits `ts`, `bcts`, `hb`, or `hb:N` on validation data. Returns the
/// calibrator and a fit report dict.
#[pyfunction]
fn fit_calibrator<'py>(py: Python<'py>, dataset: &Dataset, method: &str) -> PyResult<(Calibrator, Bound<'py, PyAny>)> {
    let val = &dataset.inner;
    let fitted = match method {
        "ts" => calibrate::fit_temperature(val),
        "bcts" => calibrate::fit_bcts(val),
        "hb" => calibrate::fit_histogram_binning_auto(val, &DEFAULT_HB_BIN_CHOICES),
        m => match m.strip_prefix("hb:").map(str::parse::<usize>) {
            Some(Ok(n)) => calibrate::fit_histogram_binning(val, n),
            _ => return Err(err(format!("unknown calibration method `{m}`"))),
        },
    };
    let (cal, report) = fitted.map_err(err)?;
    Ok((Calibrator { inner: cal }, to_python(py, &report)?))
}

/// Bootstrap sweep of adaptive-binning GECE over a descending `gammas` grid.
#[pyfunction]
#[pyo3(signature = (dataset, seed, gammas=None, n_resamples=analysis::DEFAULT_RESAMPLES, lens="full", selector="all", distance="tvd", stability_epsilon=analysis::DEFAULT_STABILITY_EPSILON))]
#[allow(clippy::too_many_arguments)]
fn gamma_sweep<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    seed: u64,
    gammas: Option<Vec<f64>>,
    n_resamples: usize,
    lens: &str,
    selector: &str,
    distance: &str,
    stability_epsilon: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = parts(dataset, lens, selector, distance)?;
    let cfg = SweepConfig {
        gammas: gammas.unwrap_or_else(default_gamma_grid),
        n_resamples,
        seed,
        stability_epsilon,
    };
    let r = py
        .detach(|| analysis::gamma_sweep(&dataset.inner, &p.lens, &p.selector, &p.distance, &cfg))
        .map_err(err)?;
    to_python(py, &r)
}

/// Bootstrap spread of GECE at reduced sample sizes `floor(f * N)`.
#[pyfunction]
#[pyo3(signature = (dataset, seed, fractions, gamma=analysis::BASELINE_GAMMA, n_resamples=200, lens="full", selector="all", distance="tvd"))]
#[allow(clippy::too_many_arguments)]
fn variance_profile<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    seed: u64,
    fractions: Vec<f64>,
    gamma: f64,
    n_resamples: usize,
    lens: &str,
    selector: &str,
    distance: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = parts(dataset, lens, selector, distance)?;
    let r = py
        .detach(|| {
            analysis::variance_profile(
                &dataset.inner,
                &p.lens,
                &p.selector,
                &p.distance,
                gamma,
                &fractions,
                n_resamples,
                seed,
            )
        })
        .map_err(err)?;
    to_python(py, &r)
}

/// Synthetic predictions, e.g. `generate("calibrated:1:3:1000", seed=0)`.
#[pyfunction]
fn generate(generator: &str, seed: u64) -> PyResult<Dataset> {
    let spec = GeneratorSpec {
        generator: generator.parse().map_err(err)?,
        seed,
    };
    Ok(Dataset {
        inner: synth::generate(&spec).map_err(err)?,
    })
}

#[pymodule]
pub fn gece_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Calibrator>()?;
    m.add_function(wrap_pyfunction!(gece, m)?)?;
    m.add_function(wrap_pyfunction!(gece_result, m)?)?;
    m.add_function(wrap_pyfunction!(traditional_ece, m)?)?;
    m.add_function(wrap_pyfunction!(fit_calibrator, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(variance_profile, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
