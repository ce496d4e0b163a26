//! Python bindings: effect matrices, PDS reports, transforms, scale sweeps,
//! geometry checks and synthetic data. Library errors surface as `ValueError`,
//! I/O failures as `OSError`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pds_core::transforms::parse_chain;
use pds_core::{self as core, DistanceKind, DistanceSpec, ErrorPolicy, NormKind, PdsError, PdsOptions};

fn err(e: PdsError) -> PyErr {
    match e {
        PdsError::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn metric(name: &str, sign_threshold: f64) -> PyResult<DistanceSpec> {
    let kind: DistanceKind = name.parse().map_err(err)?;
    DistanceSpec::with_sign_threshold(kind, sign_threshold).map_err(err)
}

fn norm_kind(name: &str) -> PyResult<NormKind> {
    name.parse().map_err(err)
}

#[pyclass(name = "EffectMatrix", module = "pds", skip_from_py_object)]
#[derive(Clone)]
struct PyEffectMatrix {
    inner: core::EffectMatrix,
}

#[pymethods]
impl PyEffectMatrix {
    #[new]
    fn new(values: Vec<Vec<f64>>, perturbation_ids: Vec<String>, gene_ids: Vec<String>) -> PyResult<Self> {
        let inner = core::EffectMatrix::from_rows(values, perturbation_ids, gene_ids).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let inner = core::io::read_effect_matrix(path).map_err(err)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        core::io::write_effect_matrix(path, &self.inner).map_err(err)
    }

    #[getter]
    fn perturbation_ids(&self) -> Vec<String> {
        self.inner.perturbation_ids().to_vec()
    }

    #[getter]
    fn gene_ids(&self) -> Vec<String> {
        self.inner.gene_ids().to_vec()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_perturbations(), self.inner.n_genes())
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n_perturbations() {
            return Err(err(PdsError::BadIndex {
                index: i,
                len: self.inner.n_perturbations(),
            }));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_perturbations()).map(|i| self.inner.row(i).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        let (n, p) = self.shape();
        format!("EffectMatrix({n} perturbations x {p} genes)")
    }
}

#[pyclass(name = "EffectPair", module = "pds", skip_from_py_object)]
#[derive(Clone)]
struct PyEffectPair {
    inner: core::EffectPair,
}

#[pymethods]
impl PyEffectPair {
    /// Pairs matrices that already share labels in the same order.
    #[new]
    fn new(predicted: &PyEffectMatrix, truth: &PyEffectMatrix) -> PyResult<Self> {
        let inner = core::EffectPair::new(predicted.inner.clone(), truth.inner.clone()).map_err(err)?;
        Ok(Self { inner })
    }

    /// Restricts both matrices to shared labels in lexicographic order.
    #[staticmethod]
    fn align(predicted: &PyEffectMatrix, truth: &PyEffectMatrix) -> PyResult<Self> {
        let inner = core::align_pair(&predicted.inner, &truth.inner).map_err(err)?;
        Ok(Self { inner })
    }

    fn with_targets(&self, targets: BTreeMap<String, String>) -> PyResult<Self> {
        let inner = self.inner.clone().with_targets(targets).map_err(err)?;
        Ok(Self { inner })
    }

    fn with_targets_from_labels(&self) -> PyResult<Self> {
        let inner = self.inner.clone().with_targets_from_labels().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn predicted(&self) -> PyEffectMatrix {
        PyEffectMatrix {
            inner: self.inner.predicted().clone(),
        }
    }

    #[getter]
    fn truth(&self) -> PyEffectMatrix {
        PyEffectMatrix {
            inner: self.inner.truth().clone(),
        }
    }

    #[getter]
    fn perturbation_ids(&self) -> Vec<String> {
        self.inner.perturbation_ids().to_vec()
    }

    #[getter]
    fn transform_chain(&self) -> String {
        core::transforms::format_chain(self.inner.transform_chain())
    }

    fn norm_match(&self, norm: &str) -> PyResult<Self> {
        let inner = core::norm_match(&self.inner, norm_kind(norm)?).map_err(err)?;
        Ok(Self { inner })
    }

    /// Applies a chain such as `"scale:2.0,norm-match:l2"` to the predictions.
    fn apply_chain(&self, chain: &str) -> PyResult<Self> {
        let steps = parse_chain(chain).map_err(err)?;
        let inner = core::apply_chain(&self.inner, &steps).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.n_perturbations()
    }

    fn __repr__(&self) -> String {
        format!(
            "EffectPair({} perturbations x {} genes)",
            self.inner.n_perturbations(),
            self.inner.n_genes()
        )
    }
}

#[pyclass(name = "PdsReport", module = "pds")]
struct PyPdsReport {
    inner: core::PdsReport,
}

#[pymethods]
impl PyPdsReport {
    #[getter]
    fn mean_pds(&self) -> f64 {
        self.inner.mean_pds
    }

    #[getter]
    fn metric(&self) -> String {
        self.inner.metric.to_string()
    }

    #[getter]
    fn perturbation_ids(&self) -> Vec<String> {
        self.inner.per_perturbation.iter().map(|s| s.perturbation_id.clone()).collect()
    }

    #[getter]
    fn ranks(&self) -> Vec<f64> {
        self.inner.ranks()
    }

    #[getter]
    fn pds(&self) -> Vec<f64> {
        self.inner.per_perturbation.iter().map(|s| s.pds).collect()
    }

    /// `(perturbation_id, message)` for anchors that could not be scored.
    #[getter]
    fn flagged(&self) -> Vec<(String, String)> {
        self.inner
            .flagged()
            .map(|s| (s.perturbation_id.clone(), s.error.clone().unwrap_or_default()))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("PdsReport(metric={}, mean_pds={})", self.inner.metric, self.inner.mean_pds)
    }
}

#[pyfunction]
#[pyo3(signature = (pair, metric = "l2", mask_target = false, sign_threshold = 0.0, on_error = "worst-rank", parallel = true))]
fn compute_pds(
    py: Python<'_>,
    pair: &PyEffectPair,
    metric: &str,
    mask_target: bool,
    sign_threshold: f64,
    on_error: &str,
    parallel: bool,
) -> PyResult<PyPdsReport> {
    let spec = self::metric(metric, sign_threshold)?;
    let error_policy = match on_error {
        "worst-rank" => ErrorPolicy::WorstRank,
        "exclude" => ErrorPolicy::Exclude,
        other => {
            return Err(PyValueError::new_err(format!(
                "on_error must be `worst-rank` or `exclude`, got `{other}`"
            )))
        }
    };
    let options = PdsOptions {
        apply_target_mask: mask_target,
        error_policy,
        parallel,
    };
    let inner = py
        .detach(|| core::compute_pds(&pair.inner, &spec, &options))
        .map_err(err)?;
    Ok(PyPdsReport { inner })
}

/// `(rank, pds)` of `distances[true_index]` with mid-rank ties.
#[pyfunction]
fn pds_row(distances: Vec<f64>, true_index: usize) -> PyResult<(f64, f64)> {
    core::pds_row(&distances, true_index).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (metric, a, b, sign_threshold = 0.0))]
fn distance(metric: &str, a: Vec<f64>, b: Vec<f64>, sign_threshold: f64) -> PyResult<f64> {
    core::distance(&self::metric(metric, sign_threshold)?, &a, &b).map_err(err)
}

#[pyfunction]
fn read_effect_matrix(path: &str) -> PyResult<PyEffectMatrix> {
    PyEffectMatrix::read_csv(path)
}

#[pyfunction]
fn align_pair(predicted: &PyEffectMatrix, truth: &PyEffectMatrix) -> PyResult<PyEffectPair> {
    PyEffectPair::align(predicted, truth)
}

#[pyfunction]
fn norm_match(pair: &PyEffectPair, norm: &str) -> PyResult<PyEffectPair> {
    pair.norm_match(norm)
}

#[pyfunction]
fn apply_chain(pair: &PyEffectPair, chain: &str) -> PyResult<PyEffectPair> {
    pair.apply_chain(chain)
}

#[pyfunction]
#[pyo3(signature = (pair, mask_target = false))]
fn convergence_threshold_l2(pair: &PyEffectPair, mask_target: bool) -> PyResult<f64> {
    core::convergence_threshold_l2(&pair.inner, mask_target).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (pair, mask_target = false))]
fn l1_flip_threshold(pair: &PyEffectPair, mask_target: bool) -> PyResult<f64> {
    core::l1_flip_threshold(&pair.inner, mask_target).map_err(err)
}

/// Mean PDS per metric over a grid of global prediction scales, plus the
/// large-scale limit of each metric.
#[pyfunction]
#[pyo3(signature = (pair, metrics, scales, mask_target = false, sign_threshold = 0.0))]
fn scale_sweep<'py>(
    py: Python<'py>,
    pair: &PyEffectPair,
    metrics: Vec<String>,
    scales: Vec<f64>,
    mask_target: bool,
    sign_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let specs = metrics
        .iter()
        .map(|m| metric(m, sign_threshold))
        .collect::<PyResult<Vec<_>>>()?;
    let options = PdsOptions::default().masked(mask_target);
    let result = py
        .detach(|| core::scale_sweep(&pair.inner, &specs, &scales, &options))
        .map_err(err)?;

    let curves = PyDict::new(py);
    for curve in &result.curves {
        let entry = PyDict::new(py);
        entry.set_item("mean_pds", curve.mean_pds.clone())?;
        entry.set_item("limit_mean_pds", curve.limit_mean_pds)?;
        curves.set_item(curve.metric.to_string(), entry)?;
    }
    let out = PyDict::new(py);
    out.set_item("scales", result.scales)?;
    out.set_item("curves", curves)?;
    out.set_item("l2_convergence_threshold", result.l2_convergence_threshold)?;
    Ok(out)
}

#[pyfunction]
fn orthogonal_ray_certificate<'py>(
    py: Python<'py>,
    pred_norm: f64,
    true_norm: f64,
    cosine: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = core::orthogonal_ray_certificate(pred_norm, true_norm, cosine).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("safe", c.safe)?;
    out.set_item("cosine", c.cosine)?;
    out.set_item("threshold", c.threshold)?;
    out.set_item("margin", c.margin)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (dimension, norm_ratio, true_cosine, samples = 100_000, seed = 0, distance = "l2"))]
fn region_fraction<'py>(
    py: Python<'py>,
    dimension: usize,
    norm_ratio: f64,
    true_cosine: f64,
    samples: u64,
    seed: u64,
    distance: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = norm_kind(distance)?;
    let r = py
        .detach(|| core::region_fraction(dimension, norm_ratio, true_cosine, samples, seed, kind))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("dimension", r.dimension)?;
    out.set_item("fraction_closer", r.fraction_closer)?;
    out.set_item("standard_error", r.standard_error)?;
    out.set_item("samples", r.samples)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (
    n_perturbations = 100,
    n_genes = 500,
    truth_norm_mu = 0.0,
    truth_norm_sigma = 1.0,
    target_cosine = 0.6,
    prediction_scale = 1.0,
    seed = 0,
))]
fn synth_generate(
    n_perturbations: usize,
    n_genes: usize,
    truth_norm_mu: f64,
    truth_norm_sigma: f64,
    target_cosine: f64,
    prediction_scale: f64,
    seed: u64,
) -> PyResult<PyEffectPair> {
    let spec = core::SynthSpec {
        n_perturbations,
        n_genes,
        truth_norm_mu,
        truth_norm_sigma,
        target_cosine,
        prediction_scale,
        seed,
    };
    let inner = core::synth::generate(&spec).map_err(err)?;
    Ok(PyEffectPair { inner })
}

#[pymodule]
fn pds(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("METRICS", DistanceKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    m.add_class::<PyEffectMatrix>()?;
    m.add_class::<PyEffectPair>()?;
    m.add_class::<PyPdsReport>()?;
    m.add_function(wrap_pyfunction!(compute_pds, m)?)?;
    m.add_function(wrap_pyfunction!(pds_row, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(read_effect_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(align_pair, m)?)?;
    m.add_function(wrap_pyfunction!(norm_match, m)?)?;
    m.add_function(wrap_pyfunction!(apply_chain, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_threshold_l2, m)?)?;
    m.add_function(wrap_pyfunction!(l1_flip_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(scale_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(orthogonal_ray_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(region_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    Ok(())
}
