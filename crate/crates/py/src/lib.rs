//! Python bindings. Matrices cross the boundary as lists of rows; reports
//! come back as plain dicts.

use domdist_core::analysis::{self, DistanceMatrix, PhiOptions};
use domdist_core::bandit;
use domdist_core::distances::{self, DistanceConfig, DomainBatch, FldConfig, KernelConfig, Measure, MixtureSpec};
use domdist_core::harness::{self, AnalysisConfig, ExperimentConfig, ScenarioConfig, Scheduler, SynthConfig};
use domdist_core::numerics::Mat;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn err(e: domdist_core::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn batch(rows: &Rows) -> PyResult<DomainBatch> {
    DomainBatch::from_rows("batch", rows).map_err(err)
}

fn config(bandwidth: Option<f64>, ridge: Option<f64>) -> DistanceConfig {
    DistanceConfig {
        kernel: bandwidth.map(KernelConfig::fixed).unwrap_or_default(),
        fld: ridge.map(FldConfig::fixed).unwrap_or_default(),
    }
}

fn matrix(rows: &Rows, label: &str) -> PyResult<DistanceMatrix> {
    let ids = (0..rows.len()).map(|i| i.to_string()).collect();
    DistanceMatrix::new(ids, Mat::from_rows(rows).map_err(err)?, label).map_err(err)
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Experiment settings from an optional dict of `ExperimentConfig` fields.
fn experiment(py: Python<'_>, cfg: Option<&Bound<'_, PyDict>>) -> PyResult<ExperimentConfig> {
    let Some(d) = cfg else {
        return Ok(ExperimentConfig::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(value_err)?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// One domain: labeled train/valid/test splits and an unlabeled pool.
#[pyclass(name = "DomainDataset", module = "domdist", from_py_object)]
#[derive(Clone)]
struct PyDomainDataset(harness::DomainDataset);

#[pymethods]
impl PyDomainDataset {
    #[getter]
    fn domain_id(&self) -> String {
        self.0.domain_id.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `(inputs, labels)` of `train`, `valid` or `test`.
    fn split(&self, name: &str) -> PyResult<(Rows, Vec<usize>)> {
        let b = match name {
            "train" => &self.0.train,
            "valid" => &self.0.valid,
            "test" => &self.0.test,
            _ => return Err(PyValueError::new_err(format!("unknown split {name:?}"))),
        };
        Ok((b.inputs.to_rows(), b.labels.clone()))
    }

    fn unlabeled(&self) -> Rows {
        self.0.unlabeled.to_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "DomainDataset({:?}, dim={}, train={}, unlabeled={})",
            self.0.domain_id,
            self.0.dim(),
            self.0.train.len(),
            self.0.unlabeled.rows()
        )
    }
}

fn unwrap_all(ds: &[PyDomainDataset]) -> Vec<harness::DomainDataset> {
    ds.iter().map(|d| d.0.clone()).collect()
}

/// UCB1 state over named arms.
#[pyclass(name = "BanditState", module = "domdist")]
struct PyBanditState(bandit::BanditState);

#[pymethods]
impl PyBanditState {
    #[new]
    fn new(arms: Vec<String>) -> PyResult<Self> {
        bandit::BanditState::new(arms).map(Self).map_err(err)
    }

    fn select(&self) -> usize {
        self.0.select()
    }

    fn update(&mut self, arm: usize, reward: f64) -> PyResult<()> {
        self.0.update(arm, reward).map_err(err)
    }

    fn ucb_value(&self, arm: usize) -> f64 {
        self.0.ucb_value(arm)
    }

    #[getter]
    fn arms(&self) -> Vec<String> {
        self.0.arms().to_vec()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.0.q().to_vec()
    }

    #[getter]
    fn pulls(&self) -> Vec<u64> {
        self.0.pulls().to_vec()
    }

    #[getter]
    fn total_pulls(&self) -> u64 {
        self.0.total_pulls()
    }
}

/// Distance between two batches under one of `l2`, `cosine`, `mmd`, `fld`,
/// `coral`. `bandwidth` fixes the MMD kernel (median heuristic otherwise);
/// `ridge` fixes the FLD regularizer.
#[pyfunction]
#[pyo3(signature = (measure, source, target, bandwidth=None, ridge=None))]
fn distance(measure: &str, source: Rows, target: Rows, bandwidth: Option<f64>, ridge: Option<f64>) -> PyResult<f64> {
    let m: Measure = measure.parse().map_err(err)?;
    distances::distance(m, &batch(&source)?, &batch(&target)?, &config(bandwidth, ridge)).map_err(err)
}

/// Weighted mixture such as `"l2:0.5,mmd:2"`.
#[pyfunction]
#[pyo3(signature = (spec, source, target, bandwidth=None, ridge=None))]
fn mixture_distance(spec: &str, source: Rows, target: Rows, bandwidth: Option<f64>, ridge: Option<f64>) -> PyResult<f64> {
    let mix: MixtureSpec = spec.parse().map_err(err)?;
    distances::d_mixture(&batch(&source)?, &batch(&target)?, &mix, &config(bandwidth, ridge)).map_err(err)
}

/// Per-sample gradients `(d/d source, d/d target)`.
#[pyfunction]
#[pyo3(signature = (measure, source, target, bandwidth=None, ridge=None))]
fn grad_distance(
    measure: &str,
    source: Rows,
    target: Rows,
    bandwidth: Option<f64>,
    ridge: Option<f64>,
) -> PyResult<(Rows, Rows)> {
    let m: Measure = measure.parse().map_err(err)?;
    let g = distances::grad_distance(m, &batch(&source)?, &batch(&target)?, &config(bandwidth, ridge)).map_err(err)?;
    Ok((g.source.to_rows(), g.target.to_rows()))
}

#[pyfunction]
fn z1(m: Rows) -> PyResult<f64> {
    Ok(analysis::z1(&matrix(&m, "m")?))
}

#[pyfunction]
fn z2(m: Rows) -> PyResult<f64> {
    analysis::z2(&matrix(&m, "m")?).map_err(err)
}

/// `(phi, alpha)`: the lowest z2 over linear combinations of the matrices.
#[pyfunction]
fn mixture_phi(matrices: Vec<Rows>) -> PyResult<(f64, Vec<f64>)> {
    let ms = matrices.iter().map(|m| matrix(m, "m")).collect::<PyResult<Vec<_>>>()?;
    let r = analysis::mixture_phi(&ms, &PhiOptions::default()).map_err(err)?;
    Ok((r.phi, r.alpha))
}

#[pyfunction]
fn informativeness(matrices: Vec<Rows>, component: usize) -> PyResult<f64> {
    let ms = matrices.iter().map(|m| matrix(m, "m")).collect::<PyResult<Vec<_>>>()?;
    analysis::informativeness(&ms, component, &PhiOptions::default()).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (num_domains=5, dim=16, shift=1.0, class_sep=3.0, seed=0))]
fn gen_synthetic(num_domains: usize, dim: usize, shift: f64, class_sep: f64, seed: u64) -> PyResult<Vec<PyDomainDataset>> {
    let cfg = SynthConfig {
        num_domains,
        dim,
        shift,
        class_sep,
        seed,
        ..SynthConfig::default()
    };
    Ok(harness::gen_synthetic(&cfg).map_err(err)?.into_iter().map(PyDomainDataset).collect())
}

/// `(sources, target)` with sources `adversarial`, `neutral1`, `neutral2`, `near`.
#[pyfunction]
#[pyo3(signature = (dim=16, shift=1.0, seed=0))]
fn gen_multi_source(dim: usize, shift: f64, seed: u64) -> PyResult<(Vec<PyDomainDataset>, PyDomainDataset)> {
    let cfg = ScenarioConfig {
        dim,
        shift,
        seed,
        ..ScenarioConfig::default()
    };
    let (s, t) = harness::gen_multi_source(&cfg).map_err(err)?;
    Ok((s.into_iter().map(PyDomainDataset).collect(), PyDomainDataset(t)))
}

#[pyfunction]
fn load_embedded(path: &str) -> PyResult<Vec<PyDomainDataset>> {
    Ok(harness::load_embedded(path).map_err(err)?.into_iter().map(PyDomainDataset).collect())
}

#[pyfunction]
fn save_embedded(datasets: Vec<PyDomainDataset>, path: &str) -> PyResult<()> {
    harness::save_embedded(&unwrap_all(&datasets), path).map_err(err)
}

/// Distance matrices and separability for every measure, plus
/// informativeness when more than one measure is given.
#[pyfunction]
#[pyo3(signature = (datasets, measures=None, probe_size=200, seed=0))]
fn analyze(
    py: Python<'_>,
    datasets: Vec<PyDomainDataset>,
    measures: Option<Vec<String>>,
    probe_size: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let measures: Vec<Measure> = match measures {
        Some(ms) => ms.iter().map(|m| m.parse()).collect::<domdist_core::Result<_>>().map_err(err)?,
        None => vec![Measure::L2, Measure::Cosine, Measure::Mmd, Measure::Fld, Measure::Coral],
    };
    let cfg = AnalysisConfig {
        probe_size,
        seed,
        ..AnalysisConfig::default()
    };
    let data = unwrap_all(&datasets);
    let report = py.detach(|| harness::run_analysis(&data, &measures, &cfg)).map_err(err)?;
    let matrices: serde_json::Map<String, serde_json::Value> = report
        .matrices
        .iter()
        .map(|m| (m.label().to_string(), serde_json::json!(m.values().to_rows())))
        .collect();
    let out = serde_json::json!({
        "domains": report.matrices[0].domain_ids(),
        "matrices": matrices,
        "separability": report.separability,
        "informativeness": report.informativeness,
    });
    to_py(py, &out)
}

/// Single-source training; `config` holds any `ExperimentConfig` fields.
#[pyfunction]
#[pyo3(signature = (source, target, config=None))]
fn train_single(
    py: Python<'_>,
    source: PyDomainDataset,
    target: PyDomainDataset,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyAny>> {
    let cfg = experiment(py, config)?;
    let report = py.detach(|| harness::train_single(&source.0, &target.0, &cfg)).map_err(err)?;
    to_py(py, &report)
}

/// Multi-source training under `round_robin` or `ucb` scheduling.
#[pyfunction]
#[pyo3(signature = (sources, target, scheduler="ucb", config=None))]
fn train_multi(
    py: Python<'_>,
    sources: Vec<PyDomainDataset>,
    target: PyDomainDataset,
    scheduler: &str,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyAny>> {
    let cfg = experiment(py, config)?;
    let scheduler: Scheduler = scheduler.parse().map_err(err)?;
    let sources = unwrap_all(&sources);
    let report = py
        .detach(|| harness::train_multi(&sources, &target.0, &cfg, scheduler))
        .map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn domdist(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomainDataset>()?;
    m.add_class::<PyBanditState>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_distance, m)?)?;
    m.add_function(wrap_pyfunction!(grad_distance, m)?)?;
    m.add_function(wrap_pyfunction!(z1, m)?)?;
    m.add_function(wrap_pyfunction!(z2, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_phi, m)?)?;
    m.add_function(wrap_pyfunction!(informativeness, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(gen_multi_source, m)?)?;
    m.add_function(wrap_pyfunction!(load_embedded, m)?)?;
    m.add_function(wrap_pyfunction!(save_embedded, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(train_single, m)?)?;
    m.add_function(wrap_pyfunction!(train_multi, m)?)?;
    Ok(())
}
