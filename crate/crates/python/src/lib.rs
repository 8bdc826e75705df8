//! Python bindings: cubes and label maps, ELM / kernel ELM training,
//! belief propagation on masked grids, metrics, synthetic scenes and the full
//! Monte Carlo pipeline. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use elmlbp::elm::{init_hidden, scores_to_probs as probs_from_scores};
use elmlbp::exact::exact_marginals as exact_beliefs;
use elmlbp::hsidata::{normalize as normalize_cube, stratified_split};
use elmlbp::kelm::train_kelm;
use elmlbp::metrics::{average_accuracy, kappa, overall_accuracy, Aggregate, MeanStd, RunReport};
use elmlbp::mrf::{lbp_run, make_pairwise, mam_decide};
use elmlbp::pipeline::run_pipeline as run_monte_carlo;
use elmlbp::synth::gen_scene;

create_exception!(elmlbp, ElmLbpError, pyo3::exceptions::PyException);

fn err(e: elmlbp::Error) -> PyErr {
    ElmLbpError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Hyperspectral cube stored pixel-major with contiguous bands.
#[pyclass(name = "Cube", module = "elmlbp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCube {
    inner: elmlbp::HsiCube,
}

#[pymethods]
impl PyCube {
    #[new]
    fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: elmlbp::HsiCube::new(height, width, bands, values).map_err(err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.height(), self.inner.width(), self.inner.bands())
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn pixel(&self, row: usize, col: usize) -> PyResult<Vec<f64>> {
        if row >= self.inner.height() || col >= self.inner.width() {
            return Err(PyValueError::new_err(format!("pixel ({row}, {col}) out of range")));
        }
        Ok(self.inner.pixel(row, col).to_vec())
    }

    /// Divides by the global maximum; returns `(normalized, divisor)`.
    fn normalize(&self) -> PyResult<(PyCube, f64)> {
        let n = normalize_cube(&self.inner).map_err(err)?;
        let divisor = n.divisor();
        Ok((PyCube { inner: n.into_inner() }, divisor))
    }

    fn __repr__(&self) -> String {
        let (h, w, d) = self.shape();
        format!("Cube(height={h}, width={w}, bands={d})")
    }
}

/// Label map; 0 is background, classes are 1..=num_classes.
#[pyclass(name = "Labels", module = "elmlbp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyLabels {
    inner: elmlbp::LabelField,
}

#[pymethods]
impl PyLabels {
    #[new]
    fn new(height: usize, width: usize, num_classes: usize, labels: Vec<u16>) -> PyResult<Self> {
        Ok(Self {
            inner: elmlbp::LabelField::new(height, width, num_classes, labels).map_err(err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn labels(&self) -> Vec<u16> {
        self.inner.labels().to_vec()
    }

    fn class_sizes(&self) -> Vec<usize> {
        self.inner.class_sizes()
    }

    fn __eq__(&self, other: &PyLabels) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let (h, w) = self.inner.shape();
        format!("Labels(height={h}, width={w}, num_classes={})", self.inner.num_classes())
    }
}

/// Background-masked grid graph over the `True` cells of `mask`.
#[pyclass(name = "Graph", module = "elmlbp", frozen)]
pub struct PyGraph {
    inner: elmlbp::GridGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (height, width, mask, connectivity = 4))]
    fn new(height: usize, width: usize, mask: Vec<bool>, connectivity: u8) -> PyResult<Self> {
        let conn = connectivity.to_string().parse().map_err(err)?;
        Ok(Self {
            inner: elmlbp::GridGraph::from_mask(height, width, &mask, conn).map_err(err)?,
        })
    }

    /// Graph over the labeled pixels of `labels`.
    #[staticmethod]
    #[pyo3(signature = (labels, connectivity = 4))]
    fn from_labels(labels: &PyLabels, connectivity: u8) -> PyResult<Self> {
        let conn = connectivity.to_string().parse().map_err(err)?;
        Ok(Self {
            inner: elmlbp::mrf::build_graph(&labels.inner, conn).map_err(err)?,
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn node_coords(&self) -> Vec<(usize, usize)> {
        self.inner.node_coords().to_vec()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }
}

/// Linear ELM with a random hidden layer.
#[pyclass(name = "ElmModel", module = "elmlbp", frozen)]
pub struct PyElm {
    inner: elmlbp::ElmModel,
}

#[pymethods]
impl PyElm {
    #[staticmethod]
    #[pyo3(signature = (samples, targets, hidden_nodes, activation = "sigmoid", ridge = 0.0, seed = 0))]
    fn fit(samples: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, hidden_nodes: usize, activation: &str, ridge: f64, seed: u64) -> PyResult<Self> {
        let x = to_matrix(&samples)?;
        let y = to_matrix(&targets)?;
        let act = activation.parse().map_err(err)?;
        let hidden = init_hidden(hidden_nodes, x.ncols(), act, seed).map_err(err)?;
        Ok(Self {
            inner: elmlbp::ElmModel::fit(hidden, &x, &y, ridge).map_err(err)?,
        })
    }

    fn predict(&self, samples: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.predict(&to_matrix(&samples)?).map_err(err)?))
    }

    #[getter]
    fn output_weights(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.output_weights)
    }
}

/// Kernel ELM solved in the dual.
#[pyclass(name = "KelmModel", module = "elmlbp", frozen)]
pub struct PyKelm {
    inner: elmlbp::KelmModel,
}

#[pymethods]
impl PyKelm {
    #[staticmethod]
    #[pyo3(signature = (samples, targets, kernel = "gaussian", sigma = 0.5, cost = 512.0))]
    fn fit(samples: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, kernel: &str, sigma: f64, cost: f64) -> PyResult<Self> {
        let spec = match kernel {
            "gaussian" | "rbf" => elmlbp::KernelSpec::Gaussian { sigma },
            "linear" => elmlbp::KernelSpec::Linear,
            other => return Err(PyValueError::new_err(format!("unknown kernel '{other}'"))),
        };
        let model = train_kelm(&to_matrix(&samples)?, &to_matrix(&targets)?, spec, cost).map_err(err)?;
        Ok(Self { inner: model })
    }

    fn predict(&self, samples: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.predict(&to_matrix(&samples)?).map_err(err)?))
    }
}

/// Synthetic scene; returns `(cube, labels)`.
#[pyfunction]
#[pyo3(signature = (height = 64, width = 64, bands = 20, classes = 4, smoothing_passes = 5, noise_sigma = 0.35, background_fraction = 0.1, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn synth(
    height: usize,
    width: usize,
    bands: usize,
    classes: usize,
    smoothing_passes: usize,
    noise_sigma: f64,
    background_fraction: f64,
    seed: u64,
) -> PyResult<(PyCube, PyLabels)> {
    let spec = elmlbp::SceneSpec {
        height,
        width,
        bands,
        classes,
        smoothing_passes,
        noise_sigma,
        background_fraction,
        seed,
    };
    let (cube, labels) = gen_scene(&spec).map_err(err)?;
    Ok((PyCube { inner: cube }, PyLabels { inner: labels }))
}

/// Stratified split; give either `fraction` or per-class `counts`.
/// Returns `(train_pixels, test_pixels)` as lists of `(row, col)`.
#[pyfunction]
#[pyo3(signature = (labels, fraction = None, counts = None, seed = 0))]
#[allow(clippy::type_complexity)]
fn split(labels: &PyLabels, fraction: Option<f64>, counts: Option<Vec<usize>>, seed: u64) -> PyResult<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let spec = match (fraction, counts) {
        (Some(f), None) => elmlbp::TrainSpec::Fraction(f),
        (None, Some(c)) => elmlbp::TrainSpec::Counts(c),
        (None, None) => elmlbp::TrainSpec::Fraction(0.1),
        _ => return Err(PyValueError::new_err("give either fraction or counts, not both")),
    };
    let s = stratified_split(&labels.inner, &spec, seed).map_err(err)?;
    Ok((s.train_indices, s.test_indices))
}

/// Row-wise softmax of classifier scores.
#[pyfunction]
#[pyo3(signature = (scores, temperature = 1.0))]
fn scores_to_probs(scores: Vec<Vec<f64>>, temperature: f64) -> PyResult<Vec<Vec<f64>>> {
    let probs = probs_from_scores(&to_matrix(&scores)?, temperature).map_err(err)?;
    Ok(to_rows(probs.matrix()))
}

fn unary_field(rows: &[Vec<f64>]) -> PyResult<elmlbp::UnaryField> {
    elmlbp::UnaryField::from_rows(rows).map_err(err)
}

fn belief_rows(b: &elmlbp::BeliefField) -> Vec<Vec<f64>> {
    (0..b.num_nodes()).map(|i| b.node(i).to_vec()).collect()
}

/// Sum-product loopy BP with a Potts prior; returns a dict with `beliefs`,
/// `iterations`, `converged` and `labels`.
#[pyfunction]
#[pyo3(signature = (graph, unaries, mu, max_iters = 50, tol = 1e-6, damping = 0.5))]
fn lbp<'py>(py: Python<'py>, graph: &PyGraph, unaries: Vec<Vec<f64>>, mu: f64, max_iters: usize, tol: f64, damping: f64) -> PyResult<Bound<'py, PyDict>> {
    let unary = unary_field(&unaries)?;
    let pairwise = make_pairwise(mu, unary.num_classes()).map_err(err)?;
    let params = elmlbp::LbpParams { max_iters, tol, damping };
    let beliefs = lbp_run(&graph.inner, &unary, &pairwise, &params).map_err(err)?;
    let labels = mam_decide(&beliefs, &graph.inner).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("beliefs", belief_rows(&beliefs))?;
    out.set_item("iterations", beliefs.iterations)?;
    out.set_item("converged", beliefs.converged)?;
    out.set_item("labels", PyLabels { inner: labels })?;
    Ok(out)
}

/// Exact node marginals by enumeration (small graphs only).
#[pyfunction]
fn exact_marginals(graph: &PyGraph, unaries: Vec<Vec<f64>>, mu: f64) -> PyResult<Vec<Vec<f64>>> {
    let unary = unary_field(&unaries)?;
    let pairwise = make_pairwise(mu, unary.num_classes()).map_err(err)?;
    Ok(belief_rows(&exact_beliefs(&graph.inner, &unary, &pairwise).map_err(err)?))
}

/// OA, AA and kappa of a confusion matrix (rows = truth, columns = prediction).
#[pyfunction]
fn metrics<'py>(py: Python<'py>, confusion: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyDict>> {
    let cm = elmlbp::ConfusionMatrix::from_rows(&confusion).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("oa", overall_accuracy(&cm).map_err(err)?)?;
    out.set_item("aa", average_accuracy(&cm).map_err(err)?)?;
    out.set_item("kappa", kappa(&cm).map_err(err)?)?;
    Ok(out)
}

fn mean_std(m: &MeanStd) -> (f64, f64) {
    (m.mean, m.std)
}

fn aggregate_dict<'py>(py: Python<'py>, a: &Aggregate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("runs", a.runs)?;
    d.set_item("oa", mean_std(&a.oa))?;
    d.set_item("aa", mean_std(&a.aa))?;
    d.set_item("kappa", mean_std(&a.kappa))?;
    d.set_item("per_class", a.per_class.iter().map(mean_std).collect::<Vec<_>>())?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &RunReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("run", r.run)?;
    d.set_item("stage", &r.stage)?;
    d.set_item("oa", r.oa)?;
    d.set_item("aa", r.aa)?;
    d.set_item("kappa", r.kappa)?;
    d.set_item("per_class", r.per_class.clone())?;
    Ok(d)
}

/// Runs the Monte Carlo pipeline. Keyword options use the config-file keys
/// (`hidden_nodes=200`, `mu=2`, `classifier="kernel"`, ...).
#[pyfunction]
#[pyo3(signature = (cube, labels, **options))]
fn run_pipeline<'py>(py: Python<'py>, cube: &PyCube, labels: &PyLabels, options: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let mut config = elmlbp::PipelineConfig::default();
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<Vec<usize>>() {
                Ok(list) => list.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
                Err(_) => v.str()?.to_string(),
            };
            config.set(&key, &value).map_err(err)?;
        }
    }
    let result = py.detach(|| run_monte_carlo(&config, &cube.inner, &labels.inner)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("pixel", aggregate_dict(py, &result.pixel)?)?;
    out.set_item("spatial", aggregate_dict(py, &result.spatial)?)?;
    let reports = result.reports().iter().map(|r| report_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    out.set_item("reports", reports)?;
    let maps: Vec<(PyLabels, PyLabels)> = result
        .runs
        .iter()
        .map(|r| {
            (
                PyLabels { inner: r.prepared.pixel_prediction.clone() },
                PyLabels { inner: r.spatial.prediction.clone() },
            )
        })
        .collect();
    out.set_item("maps", maps)?;
    Ok(out)
}

#[pymodule(name = "elmlbp")]
mod python_module {
    #[pymodule_export]
    use super::{
        exact_marginals, lbp, metrics, run_pipeline, scores_to_probs, split, synth, ElmLbpError, PyCube, PyElm, PyGraph, PyKelm,
        PyLabels,
    };
}
