use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tarag_core::annotation::decompose_rule;
use tarag_core::config::Config;
use tarag_core::eval::{compare_methods, load_eval_set, McqaItem};
use tarag_core::ingest::{build_corpus_index, CorpusIndex, Document};
use tarag_core::retrieval::{retrieve, Method, RetrievalRequest};
use tarag_core::temporal::{self, Granularity};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hand a serde value to Python as plain dicts and lists.
fn to_py<T: Serialize + ?Sized>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn load_config(path: Option<PathBuf>) -> PyResult<Config> {
    match path {
        Some(p) => Config::load(p).map_err(value_err),
        None => Ok(Config::default()),
    }
}

#[pyclass(module = "tarag", frozen, eq, ord, hash, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Date(temporal::Date);

#[pymethods]
impl Date {
    #[new]
    fn new(year: i32, month: u32, day: u32) -> PyResult<Self> {
        temporal::Date::new(year, month, day).map(Date).map_err(value_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        text.parse().map(Date).map_err(value_err)
    }

    #[getter]
    fn year(&self) -> i32 {
        self.0.year()
    }

    #[getter]
    fn month(&self) -> u32 {
        self.0.month()
    }

    #[getter]
    fn day(&self) -> u32 {
        self.0.day()
    }

    #[pyo3(name = "to_days")]
    fn days(&self) -> i32 {
        self.0.to_days()
    }

    fn add_days(&self, days: i64) -> PyResult<Self> {
        self.0.add_days(days).map(Date).map_err(value_err)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Date('{}')", self.0)
    }
}

/// Half-open `[start, end)` at day resolution.
#[pyclass(module = "tarag", frozen, eq, hash, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct TimeInterval(temporal::TimeInterval);

#[pymethods]
impl TimeInterval {
    #[new]
    fn new(start: &Date, end: &Date) -> PyResult<Self> {
        temporal::TimeInterval::new(start.0, end.0).map(TimeInterval).map_err(value_err)
    }

    #[staticmethod]
    fn year(year: i32) -> PyResult<Self> {
        temporal::TimeInterval::year(year).map(TimeInterval).map_err(value_err)
    }

    #[staticmethod]
    fn month(year: i32, month: u32) -> PyResult<Self> {
        temporal::TimeInterval::month(year, month).map(TimeInterval).map_err(value_err)
    }

    #[getter]
    fn start(&self) -> Date {
        Date(self.0.start())
    }

    #[getter]
    fn end(&self) -> Date {
        Date(self.0.end())
    }

    fn __len__(&self) -> usize {
        self.0.len_days() as usize
    }

    fn __contains__(&self, d: &Date) -> bool {
        self.0.contains(d.0)
    }

    fn overlaps(&self, other: &TimeInterval) -> bool {
        self.0.overlaps(&other.0)
    }

    fn intersection(&self, other: &TimeInterval) -> Option<TimeInterval> {
        self.0.intersection(&other.0).map(TimeInterval)
    }

    fn __repr__(&self) -> String {
        format!("TimeInterval('{}', '{}')", self.0.start(), self.0.end())
    }
}

/// A built corpus index plus the configuration used to query it.
#[pyclass(module = "tarag", frozen)]
struct Index {
    inner: CorpusIndex,
    config: Config,
}

#[pymethods]
impl Index {
    /// `docs` is a list of `{"doc_id" | "id", "text", "metadata"?}` dicts.
    #[staticmethod]
    #[pyo3(signature = (docs, config=None, timestamp=None))]
    fn build(
        py: Python<'_>,
        docs: &Bound<'_, PyAny>,
        config: Option<PathBuf>,
        timestamp: Option<String>,
    ) -> PyResult<(Self, Py<PyAny>)> {
        let docs: Vec<Document> = from_py(docs)?;
        let config = load_config(config)?;
        let mut ingest = config.ingest.clone();
        ingest.build_timestamp = timestamp.or(ingest.build_timestamp);
        let providers = config.providers().map_err(value_err)?;
        let (inner, report) = py
            .detach(|| build_corpus_index(&docs, &providers, &ingest, None))
            .map_err(value_err)?;
        let report = to_py(py, &report)?;
        Ok((Index { inner, config }, report))
    }

    /// Without a config, the stub providers are used at the index's dimension.
    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn load(path: PathBuf, config: Option<PathBuf>) -> PyResult<Self> {
        let inner = CorpusIndex::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let mut config = match config {
            Some(p) => load_config(Some(p))?,
            None => Config::default(),
        };
        if let tarag_core::config::EmbedderConfig::Stub { dim } = &mut config.embedder {
            *dim = inner.manifest().dim;
        }
        Ok(Index { inner, config })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn corpus_bounds(&self) -> TimeInterval {
        TimeInterval(self.inner.corpus_bounds())
    }

    fn manifest(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.inner.manifest())
    }

    fn chunks(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.inner.chunks())
    }

    #[pyo3(signature = (question, method="ta_rag", k=10, granularity=None, max_anchors=None))]
    fn query(
        &self,
        py: Python<'_>,
        question: String,
        method: &str,
        k: usize,
        granularity: Option<&str>,
        max_anchors: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let method: Method = method.parse().map_err(value_err)?;
        let mut overrides = self.config.retrieval.overrides();
        if let Some(g) = granularity {
            overrides.granularity = Some(g.parse::<Granularity>().map_err(value_err)?);
        }
        overrides.max_anchors = max_anchors.or(overrides.max_anchors);
        let providers = self.config.providers().map_err(value_err)?;
        let req = RetrievalRequest::new(question, k, method).with_overrides(overrides);
        let result = py.detach(|| retrieve(&self.inner, &providers, &req)).map_err(value_err)?;
        to_py(py, &result)
    }

    /// `items` is a path to a JSON-lines eval set or a list of item dicts.
    /// Returns the comparison as a dict with one report per (method, k).
    #[pyo3(signature = (items, methods=vec!["ta_rag".to_string()], k=vec![5, 10, 20, 50], runs=None))]
    fn evaluate(
        &self,
        py: Python<'_>,
        items: &Bound<'_, PyAny>,
        methods: Vec<String>,
        k: Vec<usize>,
        runs: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let items: Vec<McqaItem> = match items.extract::<PathBuf>() {
            Ok(path) => load_eval_set(path).map_err(value_err)?,
            Err(_) => from_py(items)?,
        };
        let methods = methods
            .iter()
            .map(|m| m.parse::<Method>().map_err(value_err))
            .collect::<PyResult<Vec<_>>>()?;
        let providers = self.config.providers().map_err(value_err)?;
        let generator = self.config.generator(&providers);
        let opts = self.config.eval_options();
        let runs = runs.unwrap_or(self.config.eval.runs);
        let cmp = py
            .detach(|| compare_methods(&self.inner, &providers, generator.as_ref(), &items, &methods, &k, runs, &opts))
            .map_err(value_err)?;
        to_py(py, &cmp)
    }
}

/// Split a question into its content and the time constraints it states.
#[pyfunction]
fn decompose(py: Python<'_>, question: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &decompose_rule(question).map_err(value_err)?)
}

#[pymodule]
fn tarag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Date>()?;
    m.add_class::<TimeInterval>()?;
    m.add_class::<Index>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    Ok(())
}
