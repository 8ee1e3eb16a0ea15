//! Python bindings for the storyarcs core.
//!
//! Arcs and matrices cross the boundary as lists of floats; books are
//! lists of token strings.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use storyarcs_core::arcs::{self, EmotionalArc};
use storyarcs_core::clustering::{self, ClusterTree, DistanceMatrix, WardInput};
use storyarcs_core::corpus;
use storyarcs_core::lexicon::{self, NeutralBand};
use storyarcs_core::modes::{self, ArcMatrix, Polarity};
use storyarcs_core::nullgen::{self, NullKind};
use storyarcs_core::report::{self, PipelineConfig, RunDir};
use storyarcs_core::som::{self, SomConfig, SomGrid};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn band(neutral_band: Option<(f64, f64)>) -> PyResult<Option<NeutralBand>> {
    neutral_band
        .map(|(lo, hi)| NeutralBand::new(lo, hi).map_err(value_err))
        .transpose()
}

fn to_arcs(rows: Vec<Vec<f64>>) -> Vec<EmotionalArc> {
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| EmotionalArc::new(i as u64, v))
        .collect()
}

fn polarity_sign(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "+",
        Polarity::Negative => "-",
    }
}

#[pyclass(name = "Lexicon", frozen)]
struct PyLexicon(lexicon::Lexicon);

#[pymethods]
impl PyLexicon {
    #[new]
    #[pyo3(signature = (entries, neutral_band=None))]
    fn new(entries: Vec<(String, f64)>, neutral_band: Option<(f64, f64)>) -> PyResult<Self> {
        lexicon::Lexicon::from_entries(entries, band(neutral_band)?)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, neutral_band=None))]
    fn load(path: PathBuf, neutral_band: Option<(f64, f64)>) -> PyResult<Self> {
        lexicon::load_lexicon(path, band(neutral_band)?)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (source, neutral_band=None))]
    fn parse(source: &str, neutral_band: Option<(f64, f64)>) -> PyResult<Self> {
        lexicon::parse_lexicon(source, band(neutral_band)?)
            .map(Self)
            .map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn score(&self, word: &str) -> Option<f64> {
        self.0.score(word)
    }

    #[getter]
    fn excluded(&self) -> usize {
        self.0.excluded()
    }

    fn words(&self) -> Vec<String> {
        self.0.words().to_vec()
    }
}

/// Returns `(score, matched_count, total_count)`.
#[pyfunction]
fn score_window(tokens: Vec<String>, lexicon: &PyLexicon) -> PyResult<(f64, usize, usize)> {
    let s = lexicon::score_window(&tokens, &lexicon.0).map_err(value_err)?;
    Ok((s.score, s.matched_count, s.total_count))
}

#[pyfunction]
#[pyo3(signature = (text, punctuation=false))]
fn tokenize(text: &str, punctuation: bool) -> Vec<String> {
    if punctuation {
        corpus::tokenize_with_punctuation(text)
    } else {
        corpus::tokenize(text)
    }
}

/// Returns `(body, front_rule, back_rule)`; rules are 1-based, `None` when
/// nothing matched.
#[pyfunction]
fn clean_text(text: &str) -> (String, Option<u8>, Option<u8>) {
    let (body, report) = corpus::clean_text(text);
    let rule = |r| match r {
        corpus::StripRule::Rule(i) => Some(i),
        corpus::StripRule::None => None,
    };
    (body, rule(report.front), rule(report.back))
}

#[pyfunction]
fn plan_windows(book_length: usize, window_size: usize, points: usize) -> PyResult<Vec<usize>> {
    Ok(arcs::plan_windows(book_length, window_size, points)
        .map_err(value_err)?
        .starts)
}

#[pyfunction]
#[pyo3(signature = (tokens, lexicon, window_size=arcs::DEFAULT_WINDOW, points=arcs::DEFAULT_POINTS))]
fn emotional_arc(
    tokens: Vec<String>,
    lexicon: &PyLexicon,
    window_size: usize,
    points: usize,
) -> PyResult<Vec<f64>> {
    Ok(
        arcs::emotional_arc(0, &tokens, &lexicon.0, window_size, points)
            .map_err(value_err)?
            .values,
    )
}

#[pyfunction]
fn mean_center(values: Vec<f64>) -> Vec<f64> {
    arcs::mean_center(&EmotionalArc::new(0, values)).values
}

#[pyclass(name = "Modes", frozen)]
struct PyModes(modes::ModeDecomposition);

#[pymethods]
impl PyModes {
    /// Modes as rows.
    #[getter]
    fn modes(&self) -> Vec<Vec<f64>> {
        (0..self.0.num_modes()).map(|j| self.0.mode(j)).collect()
    }

    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.0.singular_values.clone()
    }

    #[getter]
    fn coefficients(&self) -> Vec<Vec<f64>> {
        self.0
            .coefficients
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn normalized(&self) -> Vec<Vec<f64>> {
        self.0
            .normalized
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    fn rank(&self) -> usize {
        self.0.rank()
    }

    fn variance_explained(&self, m: usize) -> PyResult<f64> {
        self.0.variance_explained(m).map_err(value_err)
    }

    fn reconstruct(&self, row: usize, m: usize) -> PyResult<Vec<f64>> {
        self.0.reconstruct(row, m).map_err(value_err)
    }

    /// Returns `(mode, "+" | "-")`, mode 0-based.
    fn assign_mode(&self, row: usize) -> PyResult<(usize, &'static str)> {
        let (m, p) = self.0.assign_mode(row).map_err(value_err)?;
        Ok((m, polarity_sign(p)))
    }

    /// Rows of the `k` books with the strongest coefficient on mode `j`.
    #[pyo3(signature = (j, polarity="+", k=10))]
    fn top_books(&self, j: usize, polarity: &str, k: usize) -> PyResult<Vec<(usize, f64)>> {
        let p = match polarity {
            "+" => Polarity::Positive,
            "-" => Polarity::Negative,
            other => {
                return Err(value_err(format!(
                    "polarity must be '+' or '-', got {other:?}"
                )))
            }
        };
        Ok(self
            .0
            .rank_books_for_mode(j, p, k)
            .map_err(value_err)?
            .into_iter()
            .map(|b| (b.row, b.coefficient))
            .collect())
    }
}

/// SVD of the arc matrix (one arc per row). Rows are used as given; center
/// them first with `mean_center` for the usual analysis.
#[pyfunction]
fn decompose(rows: Vec<Vec<f64>>) -> PyResult<PyModes> {
    let ids = (0..rows.len() as u64).collect();
    let matrix = ArcMatrix::from_rows(&rows, ids).map_err(value_err)?;
    modes::decompose(&matrix).map(PyModes).map_err(value_err)
}

#[pyfunction]
fn distance_matrix(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let d = clustering::distance_matrix(&to_arcs(rows)).map_err(value_err)?;
    Ok((0..d.len()).map(|i| d.row(i).to_vec()).collect())
}

fn matrix_from(distances: Vec<Vec<f64>>) -> PyResult<DistanceMatrix> {
    let n = distances.len();
    if distances.iter().any(|r| r.len() != n) {
        return Err(value_err("distance matrix must be square"));
    }
    Ok(DistanceMatrix::from_fn((0..n as u64).collect(), |i, j| {
        distances[i][j]
    }))
}

#[pyclass(name = "ClusterTree", frozen)]
struct PyClusterTree(ClusterTree);

#[pymethods]
impl PyClusterTree {
    /// `(a, b, height, size)` per merge; merge `t` creates cluster `n + t`.
    #[getter]
    fn merges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.0
            .merges
            .iter()
            .map(|m| (m.a, m.b, m.height, m.size))
            .collect()
    }

    #[getter]
    fn final_height(&self) -> f64 {
        self.0.final_height()
    }

    fn cut(&self, k: usize) -> PyResult<Vec<usize>> {
        self.0.cut(k).map_err(value_err)
    }
}

/// Ward linkage over a square distance matrix.
#[pyfunction]
#[pyo3(signature = (distances, squared=true))]
fn ward_linkage(distances: Vec<Vec<f64>>, squared: bool) -> PyResult<PyClusterTree> {
    let input = if squared {
        WardInput::Squared
    } else {
        WardInput::Plain
    };
    clustering::ward_linkage(&matrix_from(distances)?, input)
        .map(PyClusterTree)
        .map_err(value_err)
}

/// Returns `(per-point values, mean)`.
#[pyfunction]
fn silhouette(labels: Vec<usize>, distances: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    let s = clustering::silhouette(&labels, &matrix_from(distances)?).map_err(value_err)?;
    Ok((s.values, s.mean))
}

#[pyclass(name = "SelfOrganizingMap")]
struct PySom {
    config: SomConfig,
    grid: Option<SomGrid>,
}

impl PySom {
    fn trained(&self) -> PyResult<&SomGrid> {
        self.grid
            .as_ref()
            .ok_or_else(|| value_err("call train() first"))
    }
}

#[pymethods]
impl PySom {
    #[new]
    #[pyo3(signature = (rows=8, cols=8, alpha=-0.15, beta=-0.15, total_steps=1_000_000, seed=0, init_amplitude=0.05))]
    fn new(
        rows: usize,
        cols: usize,
        alpha: f64,
        beta: f64,
        total_steps: u64,
        seed: u64,
        init_amplitude: f64,
    ) -> PyResult<Self> {
        let config = SomConfig {
            rows,
            cols,
            alpha,
            beta,
            total_steps,
            seed,
            init_amplitude,
        };
        config.validate().map_err(value_err)?;
        Ok(Self { config, grid: None })
    }

    /// Initializes the grid from the seed and trains it on `arcs`.
    fn train(&mut self, py: Python<'_>, arcs: Vec<Vec<f64>>) -> PyResult<()> {
        let dim = arcs.first().map_or(0, Vec::len);
        let arcs = to_arcs(arcs);
        let config = self.config.clone();
        let grid = py.detach(move || {
            let mut grid = som::init_grid(&config, dim);
            som::train(&mut grid, &arcs, &config).map(|()| grid)
        });
        self.grid = Some(grid.map_err(value_err)?);
        Ok(())
    }

    #[getter]
    fn nodes(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.trained()?.nodes.clone())
    }

    /// Best-matching node index per arc.
    fn winners(&self, arcs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        Ok(som::assign(self.trained()?, &to_arcs(arcs)))
    }

    /// Mean distance to grid neighbours, row-major.
    fn b_matrix(&self) -> PyResult<Vec<f64>> {
        Ok(som::b_matrix(self.trained()?))
    }
}

#[pyfunction]
fn word_salad(tokens: Vec<String>, seed: u64) -> Vec<String> {
    nullgen::word_salad(&tokens, seed)
}

#[pyfunction]
#[pyo3(signature = (tokens, seed, length=None))]
fn markov_nonsense(tokens: Vec<String>, seed: u64, length: Option<usize>) -> PyResult<Vec<String>> {
    let length = length.unwrap_or(tokens.len());
    nullgen::markov_nonsense(&tokens, seed, length).map_err(value_err)
}

#[pyfunction]
fn derive_seed(base: u64, kind: &str, book_id: u64, replica: usize) -> PyResult<u64> {
    let kind: NullKind = kind.parse().map_err(value_err)?;
    Ok(nullgen::derive_seed(base, kind, book_id, replica))
}

/// Runs every stage with a TOML config and returns the manifest as JSON.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config_toml: &str, run_dir: PathBuf) -> PyResult<String> {
    let config = PipelineConfig::from_toml(config_toml).map_err(value_err)?;
    let manifest = py
        .detach(|| report::run_pipeline(&config, &RunDir::new(run_dir)))
        .map_err(value_err)?;
    serde_json::to_string(&manifest).map_err(value_err)
}

#[pymodule]
fn storyarcs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyModes>()?;
    m.add_class::<PyClusterTree>()?;
    m.add_class::<PySom>()?;
    m.add_function(wrap_pyfunction!(score_window, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(plan_windows, m)?)?;
    m.add_function(wrap_pyfunction!(emotional_arc, m)?)?;
    m.add_function(wrap_pyfunction!(mean_center, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(distance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(ward_linkage, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(word_salad, m)?)?;
    m.add_function(wrap_pyfunction!(markov_nonsense, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
