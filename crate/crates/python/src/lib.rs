//! Python bindings for `provshift`.
//!
//! Build with `maturin develop` (or `cargo build -p provshift-py` and copy
//! the shared object next to your script as `provshift_py.so`).

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use provshift::corpus::{self, Features};
use provshift::metrics::{self, LogBase};
use provshift::model::{self, DesignMatrix, FittedLR, LRConfig};
use provshift::runner::{self, SlopePoints, SweepRow, SweepSpec};
use provshift::sampler::{self, CellCounts, ShiftSetting};
use provshift::synth::{self, SynthConfig};
use provshift::Error;

create_exception!(provshift_py, ProvshiftError, PyValueError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => ProvshiftError::new_err(other.to_string()),
    }
}

fn cells_to_py(c: &CellCounts) -> [[usize; 2]; 2] {
    [[c.get(0, 0), c.get(1, 0)], [c.get(0, 1), c.get(1, 1)]]
}

fn dense_row(x: Vec<f64>) -> Features {
    Features::Dense(x)
}

/// Lower-cased alphanumeric tokens.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    corpus::tokenize(text)
}

/// `(C_y, alpha_train)` of a training setting.
#[pyfunction]
fn derive_rates(p_train_y1_z0: f64, p_train_y1_z1: f64, cz: f64) -> PyResult<(f64, f64)> {
    let setting = ShiftSetting {
        p_train_y1_z0,
        p_train_y1_z1,
        cz,
        alpha_test: 1.0,
        n_train: 0,
        n_test: 0,
    };
    let r = sampler::derive_rates(&setting).map_err(py_err)?;
    Ok((r.cy, r.alpha_train))
}

/// Test rates `(p0, p1)` keeping `C_y` under `cz` with ratio `alpha_test`.
#[pyfunction]
fn solve_test_rates(cz: f64, cy: f64, alpha_test: f64) -> PyResult<(f64, f64)> {
    sampler::solve_test_rates(cz, cy, alpha_test).map_err(py_err)
}

/// Integer cell sizes indexed `[z][y]`.
#[pyfunction]
fn plan_cells(n: usize, cz: f64, p_y1_z0: f64, p_y1_z1: f64) -> PyResult<[[usize; 2]; 2]> {
    let cells = sampler::plan_cells(n, cz, p_y1_z0, p_y1_z1).map_err(py_err)?;
    Ok(cells_to_py(&cells))
}

#[pyfunction]
fn auprc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auprc(&scores, &labels).map_err(py_err)
}

/// `(slope, intercept, n_points)` of `metric` against `log(alpha)`.
#[pyfunction]
#[pyo3(signature = (points, log_base = "e"))]
fn fit_slope(points: Vec<(f64, f64)>, log_base: &str) -> PyResult<(f64, f64, usize)> {
    let base: LogBase = log_base.parse().map_err(py_err)?;
    let fit = metrics::fit_slope_with_base(&points, base).map_err(py_err)?;
    Ok((fit.slope, fit.intercept, fit.n_points))
}

/// Term-to-column map over the given texts.
#[pyfunction]
#[pyo3(signature = (texts, min_df = 1))]
fn build_vocabulary(texts: Vec<String>, min_df: usize) -> PyResult<Vec<(String, usize)>> {
    let records = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| corpus::Record::new(i.to_string(), Some(t), 0, 0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    let space = corpus::build_vocabulary(&records, min_df).map_err(py_err)?;
    Ok(space
        .vocabulary()
        .map(|v| v.iter().map(|(k, &i)| (k.clone(), i)).collect())
        .unwrap_or_default())
}

/// A two-source labelled corpus.
#[pyclass(name = "Corpus", module = "provshift_py")]
struct PyCorpus {
    inner: corpus::Corpus,
    synth: Option<SynthConfig>,
}

#[pymethods]
impl PyCorpus {
    /// Reads a JSONL corpus; `sources` maps the two source names to z = 0, 1.
    #[staticmethod]
    fn load(path: PathBuf, sources: (String, String)) -> PyResult<Self> {
        let inner = corpus::load_corpus(&path, [sources.0, sources.1]).map_err(py_err)?;
        Ok(PyCorpus { inner, synth: None })
    }

    /// Synthetic corpus with a confounding nuisance token.
    #[staticmethod]
    #[pyo3(signature = (seed = 0, n_per_source = None))]
    fn synthetic(seed: u64, n_per_source: Option<[usize; 2]>) -> PyResult<Self> {
        let mut cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        if let Some(n) = n_per_source {
            cfg.n_per_source = n;
        }
        let inner = synth::generate_corpus(&cfg).map_err(py_err)?;
        Ok(PyCorpus {
            inner,
            synth: Some(cfg),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::write_corpus(&self.inner, &path).map_err(py_err)
    }

    /// Returns a copy with embedding rows attached.
    fn attach_embeddings(&self, path: PathBuf) -> PyResult<Self> {
        let inner = corpus::attach_embeddings(&self.inner, &path).map_err(py_err)?;
        Ok(PyCorpus {
            inner,
            synth: self.synth.clone(),
        })
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn source_names(&self) -> (String, String) {
        let [a, b] = self.inner.source_names().clone();
        (a, b)
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.id.clone()).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.records().iter().map(|r| r.y).collect()
    }

    #[getter]
    fn sources(&self) -> Vec<u8> {
        self.inner.records().iter().map(|r| r.z).collect()
    }

    #[getter]
    fn texts(&self) -> Vec<Option<String>> {
        self.inner
            .records()
            .iter()
            .map(|r| r.text.clone())
            .collect()
    }

    /// Cell sizes indexed `[z][y]`.
    fn cell_counts(&self) -> [[usize; 2]; 2] {
        cells_to_py(&self.inner.cell_counts())
    }

    /// Exact posteriors; only available for synthetic corpora.
    fn oracle_scores(&self) -> PyResult<Vec<f64>> {
        let cfg = self
            .synth
            .as_ref()
            .ok_or_else(|| ProvshiftError::new_err("oracle scores need a synthetic corpus"))?;
        self.inner
            .records()
            .iter()
            .map(|r| synth::oracle_score(r, cfg).map_err(py_err))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A fitted L2 logistic regression, optionally adjusted for provenance.
#[pyclass(name = "FittedModel", module = "provshift_py")]
struct PyFittedModel {
    inner: FittedLR,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    objective: f64,
}

#[pymethods]
impl PyFittedModel {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let inner: FittedLR = text.parse().map_err(py_err)?;
        Ok(PyFittedModel {
            inner,
            converged: true,
            iterations: 0,
            objective: f64::NAN,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn beta0(&self) -> f64 {
        self.inner.beta0
    }

    #[getter]
    fn beta1(&self) -> Vec<f64> {
        self.inner.beta1.clone()
    }

    #[getter]
    fn beta2(&self) -> Vec<f64> {
        self.inner.beta2.clone()
    }

    #[getter]
    fn v(&self) -> f64 {
        self.inner.v
    }

    #[getter]
    fn pz(&self) -> Option<(f64, f64)> {
        self.inner.pz.map(|p| (p[0], p[1]))
    }

    #[getter]
    fn adjusted(&self) -> bool {
        self.inner.is_adjusted()
    }

    fn predict_conditional(&self, x: Vec<f64>, c: u8) -> PyResult<f64> {
        self.inner
            .predict_conditional(&dense_row(x), c)
            .map_err(py_err)
    }

    fn predict_backdoor(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_backdoor(&dense_row(x)).map_err(py_err)
    }

    /// Backdoor scores for adjusted models, plain probabilities otherwise.
    fn score(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        rows.into_iter()
            .map(|x| self.inner.score(&dense_row(x)).map_err(py_err))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "FittedModel(adjusted={}, dim={}, converged={})",
            self.inner.is_adjusted(),
            self.inner.beta1.len(),
            self.converged
        )
    }
}

/// Fits on dense rows. Passing `z` fits the provenance-adjusted model.
#[pyfunction]
#[pyo3(signature = (x, y, z = None, c = 1.0, v = 10.0, tol = 1e-6, max_iter = 1000))]
fn fit(
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    z: Option<Vec<u8>>,
    c: f64,
    v: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyFittedModel> {
    let design = DesignMatrix::dense(x).map_err(py_err)?;
    let cfg = LRConfig {
        c,
        v,
        tol,
        max_iter,
    };
    let res = model::fit(&design, &y, z.as_deref(), &cfg).map_err(py_err)?;
    Ok(PyFittedModel {
        inner: res.model,
        converged: res.converged,
        iterations: res.iterations,
        objective: res.objective,
    })
}

/// `(model, cy, slope, intercept, n_points)`
type SlopeTuple = (String, f64, f64, f64, usize);

fn row_dict<'py>(py: Python<'py>, r: &SweepRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("setting_id", r.setting_id)?;
    d.set_item("cy", r.cy)?;
    d.set_item("alpha_train", r.alpha_train)?;
    d.set_item("alpha_test", r.alpha_test)?;
    d.set_item("repeat", r.repeat)?;
    d.set_item("model", &r.model)?;
    d.set_item("auprc", r.auprc)?;
    d.set_item("n_train_cells", cells_to_py(&r.n_train_cells))?;
    d.set_item("n_test_cells", cells_to_py(&r.n_test_cells))?;
    Ok(d)
}

/// Runs the sweep described by a TOML or JSON config and returns its rows.
/// Output files are written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None, jobs = 1, seed = None))]
fn run_sweep<'py>(
    py: Python<'py>,
    config: PathBuf,
    out_dir: Option<PathBuf>,
    jobs: usize,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = SweepSpec::from_path(&config).map_err(py_err)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let out = py
        .detach(|| runner::run_sweep(&spec, jobs))
        .map_err(py_err)?;
    if let Some(dir) = out_dir {
        runner::write_outputs(&out, &spec, &dir).map_err(py_err)?;
    }
    out.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Slopes from a rows file: `(model, cy, slope, intercept, n_points)`.
#[pyfunction]
#[pyo3(signature = (rows, log_base = "e", per_alpha_means = false))]
fn slopes(rows: PathBuf, log_base: &str, per_alpha_means: bool) -> PyResult<Vec<SlopeTuple>> {
    let base: LogBase = log_base.parse().map_err(py_err)?;
    let rows = runner::read_rows(&rows).map_err(py_err)?;
    let points = if per_alpha_means {
        SlopePoints::Means
    } else {
        SlopePoints::Rows
    };
    let report = runner::aggregate_report(&rows, points, base);
    Ok(report
        .slopes
        .into_iter()
        .map(|s| (s.model, s.cy, s.slope, s.intercept, s.n_points))
        .collect())
}

#[pymodule]
fn provshift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ProvshiftError", m.py().get_type::<ProvshiftError>())?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyFittedModel>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(derive_rates, m)?)?;
    m.add_function(wrap_pyfunction!(solve_test_rates, m)?)?;
    m.add_function(wrap_pyfunction!(plan_cells, m)?)?;
    m.add_function(wrap_pyfunction!(auprc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    m.add_function(wrap_pyfunction!(build_vocabulary, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(slopes, m)?)?;
    Ok(())
}
