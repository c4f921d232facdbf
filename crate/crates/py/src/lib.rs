//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use sbm_consensus::bench::{self, SweepConfig};
use sbm_consensus::data::{self, LabeledDataset, LoadOptions};
use sbm_consensus::gossip::{self, GadgetConfig};
use sbm_consensus::rmt::{GridSpec, RmtPredictor};
use sbm_consensus::{consensus, spectra, Error};

type Matrix = Vec<Vec<f64>>;

create_exception!(sbm_consensus, SbmError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(m) | Error::InvalidModel(m) | Error::Config(m) => {
            PyValueError::new_err(m)
        }
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => SbmError::new_err(other.to_string()),
    }
}

/// Serializes `value` and hands it to Python's `json.loads`.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SbmError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "SbmModel", module = "sbm_consensus", frozen)]
struct PySbmModel {
    inner: sbm_consensus::SbmModel,
}

#[pymethods]
impl PySbmModel {
    /// Block sizes and a symmetric K×K probability matrix (list of rows).
    #[new]
    #[pyo3(signature = (sizes, probs, seed = 0))]
    fn new(sizes: Vec<usize>, probs: Vec<Vec<f64>>, seed: u64) -> PyResult<Self> {
        let k = probs.len();
        if probs.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err("probs must be a square matrix"));
        }
        let m = DMatrix::from_fn(k, k, |r, s| probs[r][s]);
        let inner = sbm_consensus::SbmModel::new(sizes, m, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (sizes, p_in, p_out, seed = 0))]
    fn two_level(sizes: Vec<usize>, p_in: f64, p_out: f64, seed: u64) -> PyResult<Self> {
        let probs = sbm_consensus::TwoLevelProbs::new(p_in, p_out).map_err(to_py)?;
        let inner = sbm_consensus::SbmModel::two_level(sizes, probs, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes().to_vec()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self {
            inner: self.inner.with_seed(seed),
        }
    }

    fn sample(&self, py: Python<'_>) -> PyNetwork {
        let inner = py.detach(|| self.inner.sample());
        PyNetwork { inner }
    }

    #[pyo3(signature = (max_attempts = 100))]
    fn sample_connected(&self, py: Python<'_>, max_attempts: usize) -> PyResult<PyNetwork> {
        let inner = py
            .detach(|| self.inner.sample_connected(max_attempts))
            .map_err(to_py)?;
        Ok(PyNetwork { inner })
    }

    /// `(expected_degree, expectation, variance)` block kernels.
    fn block_matrices(&self) -> PyResult<(Vec<f64>, Matrix, Matrix)> {
        let bm = self.inner.block_matrices().map_err(to_py)?;
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|r| m.row(r).iter().copied().collect())
                .collect()
        };
        Ok((
            bm.expected_degree.iter().copied().collect(),
            rows(&bm.expectation),
            rows(&bm.variance),
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "SbmModel(sizes={:?}, seed={})",
            self.inner.sizes(),
            self.inner.seed()
        )
    }
}

#[pyclass(name = "Network", module = "sbm_consensus", frozen)]
struct PyNetwork {
    inner: sbm_consensus::Network,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = sbm_consensus::Network::from_edge_list(n, &edges).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn complete(n: usize) -> Self {
        Self {
            inner: sbm_consensus::Network::complete(n),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| SbmError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn membership(&self) -> Vec<usize> {
        self.inner.membership().to_vec()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(n={}, edges={})",
            self.inner.n(),
            self.inner.edge_count()
        )
    }
}

#[pyclass(name = "Dataset", module = "sbm_consensus", frozen)]
struct PyDataset {
    inner: LabeledDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (path, target_class = None, append_bias = false))]
    fn load(path: PathBuf, target_class: Option<f64>, append_bias: bool) -> PyResult<Self> {
        let opts = LoadOptions {
            target_class,
            append_bias,
            ..LoadOptions::default()
        };
        let inner = data::load_sparse_text(&path, &opts).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n_examples, d, margin, seed = 0))]
    fn blobs(n_examples: usize, d: usize, margin: f64, seed: u64) -> PyResult<Self> {
        let inner = data::make_blobs(n_examples, d, margin, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::write_sparse_text(&self.inner, &path).map_err(to_py)
    }

    fn split(&self, test_fraction: f64, seed: u64) -> (Self, Self) {
        let (a, b) = self.inner.split(test_fraction, seed);
        (Self { inner: a }, Self { inner: b })
    }

    fn accuracy(&self, w: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&w)?;
        Ok(self.inner.accuracy(&w))
    }

    fn objective(&self, w: Vec<f64>, nu: f64) -> PyResult<f64> {
        self.check_dim(&w)?;
        Ok(self.inner.objective(&w, nu))
    }

    fn labels(&self) -> Vec<f64> {
        self.inner.examples.iter().map(|e| e.y).collect()
    }

    fn dense(&self) -> Vec<Vec<f64>> {
        self.inner.dense_rows()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

impl PyDataset {
    fn check_dim(&self, w: &[f64]) -> PyResult<()> {
        if w.len() != self.inner.d {
            return Err(PyValueError::new_err(format!(
                "weight vector has {} entries for dimension {}",
                w.len(),
                self.inner.d
            )));
        }
        Ok(())
    }
}

/// Ascending normalized-Laplacian eigenvalues.
#[pyfunction]
fn spectrum(py: Python<'_>, net: &PyNetwork) -> PyResult<Vec<f64>> {
    py.detach(|| spectra::normalized_laplacian_spectrum(&net.inner))
        .map(|s| s.eigenvalues)
        .map_err(to_py)
}

#[pyfunction]
fn lambda2(py: Python<'_>, net: &PyNetwork) -> PyResult<f64> {
    py.detach(|| spectra::lambda2(&net.inner)).map_err(to_py)
}

/// Random-matrix prediction: density curve, support edges, isolated values.
#[pyfunction]
#[pyo3(signature = (model, lo = 0.0, hi = 2.0, points = 801, eta = 1e-3))]
fn predict<'py>(
    py: Python<'py>,
    model: &PySbmModel,
    lo: f64,
    hi: f64,
    points: usize,
    eta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = GridSpec {
        lo,
        hi,
        points,
        eta,
    };
    let pred = py
        .detach(|| RmtPredictor::new(&model.inner).and_then(|p| p.predict(&grid)))
        .map_err(to_py)?;
    to_object(py, &pred)
}

#[pyfunction]
fn predict_lambda2<'py>(py: Python<'py>, model: &PySbmModel) -> PyResult<Bound<'py, PyAny>> {
    let pred = py
        .detach(|| RmtPredictor::new(&model.inner).and_then(|p| p.predict_lambda2()))
        .map_err(to_py)?;
    to_object(py, &pred)
}

/// Scalar consensus from `x0` (uniform on [0, 1] from `seed` when omitted).
#[pyfunction]
#[pyo3(signature = (net, x0 = None, epsilon = 1e-10, max_rounds = 200_000, seed = 0))]
fn run_consensus<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    x0: Option<Vec<f64>>,
    epsilon: f64,
    max_rounds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let x0 = x0.unwrap_or_else(|| consensus::uniform_x0(net.inner.n(), seed));
    let run = py
        .detach(|| consensus::run(&net.inner, &x0, epsilon, max_rounds))
        .map_err(to_py)?;
    to_object(py, &run)
}

/// `(exact, first_order)` upper bounds on the consensus time.
#[pyfunction]
fn tau_bound(mu2_abs: f64, epsilon: f64) -> PyResult<(f64, f64)> {
    let b = consensus::tau_bound(mu2_abs, epsilon).map_err(to_py)?;
    Ok((b.exact, b.first_order))
}

/// GADGET on a sampled network. Keyword arguments override [`GadgetConfig`]
/// defaults.
#[pyfunction]
#[pyo3(signature = (net, train, test, nu = 0.01, epsilon = 1e-10, max_rounds = 100_000, learning_rounds = Some(100), eval_every = 1, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn run_gadget<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    train: &PyDataset,
    test: &PyDataset,
    nu: f64,
    epsilon: f64,
    max_rounds: usize,
    learning_rounds: Option<usize>,
    eval_every: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = GadgetConfig {
        nu,
        epsilon,
        max_rounds,
        learning_rounds,
        eval_every,
        seed,
        ..GadgetConfig::default()
    };
    let run = py
        .detach(|| {
            let part = data::partition_equal(&train.inner, net.inner.n(), seed)?;
            gossip::run_gadget_on(&net.inner, &train.inner, &test.inner, &part, &cfg)
        })
        .map_err(to_py)?;
    to_object(py, &run)
}

/// Single-node Pegasos on the whole dataset.
#[pyfunction]
#[pyo3(signature = (train, nu, steps, seed = 0))]
fn pegasos(
    py: Python<'_>,
    train: &PyDataset,
    nu: f64,
    steps: u64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    py.detach(|| gossip::pegasos(&train.inner, nu, steps, seed))
        .map_err(to_py)
}

/// Δ sweep from a JSON config string (same keys as the CLI config files).
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SweepConfig =
        serde_json::from_str(config).map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    let rows = py
        .detach(|| bench::sweep(&cfg, |_| Ok(())))
        .map_err(to_py)?;
    to_object(py, &rows)
}

/// Least-squares fit of `y = a / (c − x)`; the pole is searched unless fixed.
#[pyfunction]
#[pyo3(signature = (x, y, fix_pole = None))]
fn fit_reciprocal<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    y: Vec<f64>,
    fix_pole: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err("x and y differ in length"));
    }
    let fit = bench::fit_reciprocal(&x, &y, fix_pole).map_err(to_py)?;
    to_object(py, &fit)
}

#[pyfunction]
fn detect_bifurcation<'py>(
    py: Python<'py>,
    sizes: Vec<usize>,
    p_in: f64,
    deltas: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let b = py
        .detach(|| bench::detect_bifurcation(&sizes, p_in, &deltas))
        .map_err(to_py)?;
    to_object(py, &b)
}

#[pymodule(name = "sbm_consensus")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SbmError", m.py().get_type::<SbmError>())?;
    m.add_class::<PySbmModel>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(lambda2, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(predict_lambda2, m)?)?;
    m.add_function(wrap_pyfunction!(run_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(tau_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_gadget, m)?)?;
    m.add_function(wrap_pyfunction!(pegasos, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_reciprocal, m)?)?;
    m.add_function(wrap_pyfunction!(detect_bifurcation, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
