//! Python bindings for the mvscreen pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mvscreen_core::caption::mock_caption as core_mock_caption;
use mvscreen_core::eval::{self, FoldItem, Smoothing};
use mvscreen_core::identify::{self, Binary, KeywordLexicon};
use mvscreen_core::ingest::{self, IngestError};
use mvscreen_core::pipeline::{self, PipelineConfig, PipelineError, ProviderChoice};
use mvscreen_core::select::{self, SelectionConfig};
use mvscreen_core::similarity::{self, SimilarityConfig};
use mvscreen_core::{Label, ScreenType};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ingest_err(e: IngestError) -> PyErr {
    match e {
        IngestError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Ingest {
            source: IngestError::Io { .. },
            ..
        } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn parse_label(s: Option<&str>) -> PyResult<Option<Label>> {
    s.map(|s| s.parse::<Label>().map_err(PyValueError::new_err)).transpose()
}

#[pyclass(name = "Dataset", module = "mvscreen")]
pub struct PyDataset {
    inner: ingest::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads and cross-validates a manifest and an EMB1 embedding file.
    #[staticmethod]
    fn load(manifest: PathBuf, embeddings: PathBuf) -> PyResult<Self> {
        let frames = ingest::parse_manifest(&manifest).map_err(ingest_err)?;
        let m = ingest::load_embeddings(&embeddings).map_err(ingest_err)?;
        let inner = ingest::validate_dataset(frames, m).map_err(ingest_err)?;
        Ok(PyDataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.embeddings().dim()
    }

    /// Frame ids sorted by (participant, timestamp, frame id).
    fn frame_ids(&self) -> Vec<String> {
        self.inner.frames().iter().map(|f| f.frame_id.clone()).collect()
    }

    fn label(&self, frame_id: &str) -> Option<&'static str> {
        self.inner.frame(frame_id).and_then(|f| f.label).map(Label::as_str)
    }

    fn vector(&self, frame_id: &str) -> PyResult<Vec<f32>> {
        let i = self
            .inner
            .position(frame_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown frame {frame_id:?}")))?;
        Ok(self.inner.vector(i).to_vec())
    }
}

#[pyclass(name = "SimilarityGraph", module = "mvscreen")]
pub struct PySimilarityGraph {
    inner: similarity::SimilarityGraph,
}

#[pymethods]
impl PySimilarityGraph {
    #[staticmethod]
    #[pyo3(signature = (dataset, tau_low = 0.40, tau_high = 0.70, window_frames = 12))]
    fn build(dataset: &PyDataset, tau_low: f64, tau_high: f64, window_frames: usize) -> PyResult<Self> {
        let cfg = SimilarityConfig {
            tau_low,
            tau_high,
            window_frames,
        };
        let inner = similarity::build_graph(&dataset.inner, &cfg).map_err(value_err)?;
        Ok(PySimilarityGraph { inner })
    }

    /// Graph over nodes named by `frame_ids` (one participant, timestamps in
    /// list order) with the given undirected edges.
    #[staticmethod]
    fn from_edges(frame_ids: Vec<String>, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let nodes = frame_ids
            .into_iter()
            .enumerate()
            .map(|(t, frame_id)| similarity::GraphNode {
                frame_id,
                participant_id: "p".into(),
                timestamp: t as i64,
            })
            .collect();
        let edges = edges
            .into_iter()
            .map(|(i, j, weight)| similarity::Edge { i, j, weight })
            .collect();
        let inner = similarity::SimilarityGraph::from_parts(nodes, edges).map_err(value_err)?;
        Ok(PySimilarityGraph { inner })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.i, e.j, e.weight)).collect()
    }

    fn degree(&self, node: usize) -> PyResult<usize> {
        if node >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.inner.degree(node))
    }

    #[pyo3(signature = (k = 3))]
    fn select_views(&self, k: usize) -> PyResult<Vec<PyMultiViewGroup>> {
        let groups = select::select_views(&self.inner, &SelectionConfig { k }).map_err(value_err)?;
        Ok(groups.into_iter().map(|inner| PyMultiViewGroup { inner }).collect())
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }
}

#[pyclass(name = "MultiViewGroup", module = "mvscreen", frozen)]
pub struct PyMultiViewGroup {
    inner: select::MultiViewGroup,
}

#[pymethods]
impl PyMultiViewGroup {
    #[getter]
    fn group_id(&self) -> &str {
        &self.inner.group_id
    }

    #[getter]
    fn frame_ids(&self) -> Vec<String> {
        self.inner.frame_ids.clone()
    }

    #[getter]
    fn degree_sum(&self) -> usize {
        self.inner.degree_sum
    }

    fn __repr__(&self) -> String {
        format!(
            "MultiViewGroup({:?}, {:?}, degree_sum={})",
            self.inner.group_id, self.inner.frame_ids, self.inner.degree_sum
        )
    }
}

#[pyclass(name = "ScreenVerdict", module = "mvscreen", frozen)]
pub struct PyScreenVerdict {
    inner: identify::ScreenVerdict,
}

#[pymethods]
impl PyScreenVerdict {
    #[getter]
    fn group_id(&self) -> &str {
        &self.inner.group_id
    }

    #[getter]
    fn matched_phrases(&self) -> Vec<String> {
        self.inner.matched_phrases.clone()
    }

    #[getter]
    fn types(&self) -> Vec<&'static str> {
        self.inner.types.iter().map(|t| t.as_str()).collect()
    }

    #[getter]
    fn primary_type(&self) -> &'static str {
        self.inner.primary_type.as_str()
    }

    #[getter]
    fn is_screen(&self) -> bool {
        self.inner.binary == Binary::Screen
    }

    fn __repr__(&self) -> String {
        format!("ScreenVerdict({})", self.inner)
    }
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    similarity::cosine_similarity(&a, &b).map_err(value_err)
}

/// Writes an EMB1 file from (frame_id, vector) rows.
#[pyfunction]
fn write_embeddings(path: PathBuf, rows: Vec<(String, Vec<f32>)>) -> PyResult<()> {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut m = ingest::EmbeddingMatrix::new(dim).map_err(ingest_err)?;
    for (id, v) in rows {
        m.push(id, v).map_err(ingest_err)?;
    }
    ingest::write_embeddings(&path, &m).map_err(ingest_err)
}

#[pyfunction]
fn load_embeddings(path: PathBuf) -> PyResult<Vec<(String, Vec<f32>)>> {
    let m = ingest::load_embeddings(&path).map_err(ingest_err)?;
    Ok(m.rows()
        .iter()
        .map(|r| (r.frame_id.clone(), r.vector.clone()))
        .collect())
}

#[pyfunction]
#[pyo3(signature = (text, extra = None))]
fn extract_keywords(text: &str, extra: Option<Vec<(String, String)>>) -> PyResult<Vec<String>> {
    let lex = lexicon(extra)?;
    Ok(identify::extract_keywords(text, &lex))
}

#[pyfunction(name = "identify")]
#[pyo3(signature = (group_id, text, extra = None))]
fn identify_text(group_id: &str, text: &str, extra: Option<Vec<(String, String)>>) -> PyResult<PyScreenVerdict> {
    let lex = lexicon(extra)?;
    Ok(PyScreenVerdict {
        inner: identify::identify(group_id, text, &lex),
    })
}

fn lexicon(extra: Option<Vec<(String, String)>>) -> PyResult<KeywordLexicon> {
    let mut lex = KeywordLexicon::default();
    for (phrase, ty) in extra.unwrap_or_default() {
        let t = ty.parse::<ScreenType>().map_err(PyValueError::new_err)?;
        lex.insert(&phrase, t).map_err(value_err)?;
    }
    Ok(lex)
}

#[pyfunction]
#[pyo3(signature = (label = None))]
fn mock_caption(label: Option<&str>) -> PyResult<&'static str> {
    Ok(core_mock_caption(parse_label(label)?))
}

#[pyfunction]
#[pyo3(signature = (candidate, references, n = 4, smoothing = false))]
fn bleu(candidate: &str, references: Vec<String>, n: usize, smoothing: bool) -> PyResult<f64> {
    let refs: Vec<&str> = references.iter().map(String::as_str).collect();
    let s = if smoothing { Smoothing::AddOne } else { Smoothing::None };
    eval::bleu_n_with(candidate, &refs, n, s).map_err(value_err)
}

/// Accuracy, sensitivity, precision and specificity from 2x2 counts.
#[pyfunction]
fn binary_metrics<'py>(py: Python<'py>, tp: usize, fp: usize, fn_: usize, tn: usize) -> PyResult<Bound<'py, PyDict>> {
    let m = eval::ConfusionMatrix2x2::from_counts(tp, fp, fn_, tn);
    let d = PyDict::new(py);
    d.set_item("accuracy", m.accuracy())?;
    d.set_item("sensitivity", m.sensitivity())?;
    d.set_item("precision", m.precision())?;
    d.set_item("specificity", m.specificity())?;
    Ok(d)
}

#[pyfunction]
fn make_folds(items: Vec<(String, Option<String>)>, n_folds: usize, seed: u64) -> PyResult<Vec<Vec<String>>> {
    let items = items
        .into_iter()
        .map(|(group_id, label)| {
            Ok(FoldItem {
                group_id,
                label: parse_label(label.as_deref())?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    eval::make_folds(&items, n_folds, seed).map_err(value_err)
}

/// Runs every stage with the mock or file provider and returns the aggregate
/// report as a dict.
#[pyfunction]
#[pyo3(signature = (manifest, embeddings, output, k = 3, tau_low = 0.40, tau_high = 0.70, window_frames = 12, captions = None, folds = 4, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    embeddings: PathBuf,
    output: PathBuf,
    k: usize,
    tau_low: f64,
    tau_high: f64,
    window_frames: usize,
    captions: Option<PathBuf>,
    folds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = PipelineConfig::new(manifest, embeddings, output);
    cfg.similarity = SimilarityConfig {
        tau_low,
        tau_high,
        window_frames,
    };
    cfg.selection.k = k;
    if captions.is_some() {
        cfg.caption.provider = ProviderChoice::File;
        cfg.caption.captions = captions;
    }
    cfg.eval.folds = folds;
    cfg.eval.seed = seed;
    let summary = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(pipeline_err)?;
    let json = serde_json::to_string(&summary.aggregate).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (json,))
}

#[pymodule]
fn mvscreen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySimilarityGraph>()?;
    m.add_class::<PyMultiViewGroup>()?;
    m.add_class::<PyScreenVerdict>()?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(load_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(write_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(extract_keywords, m)?)?;
    m.add_function(wrap_pyfunction!(identify_text, m)?)?;
    m.add_function(wrap_pyfunction!(mock_caption, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(binary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(make_folds, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("EMBEDDING_FORMAT", mvscreen_core::EMBEDDING_FORMAT)?;
    Ok(())
}
