use std::path::PathBuf;
use std::time::Duration;

use pyo3::exceptions::{PyFileExistsError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use ::learned_lsm::bench::{gen_dataset, DatasetKind, DatasetSpec};
use ::learned_lsm::plr::{KeyInt, PlrModel};
use ::learned_lsm::{CbaMode, Engine, Error, LearningMode, Options, TWait};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) => PyValueError::new_err(e.to_string()),
        Error::AlreadyExists(_) => PyFileExistsError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// An open key-value store.
#[pyclass(module = "learned_lsm")]
struct Store {
    engine: Option<Engine>,
}

impl Store {
    fn engine(&self) -> PyResult<&Engine> {
        self.engine.as_ref().ok_or_else(|| to_py(Error::Closed))
    }
}

#[pymethods]
impl Store {
    #[new]
    #[pyo3(signature = (
        path,
        *,
        delta = 8,
        t_wait_ms = Some(50),
        learning_mode = "file",
        cba_mode = "cba",
        key_size = 16,
        memtable_kb = 4096,
        max_file_kb = 4096,
        level_divisor = 1,
        background = true,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        path: PathBuf,
        delta: u32,
        t_wait_ms: Option<u64>,
        learning_mode: &str,
        cba_mode: &str,
        key_size: usize,
        memtable_kb: usize,
        max_file_kb: usize,
        level_divisor: u64,
        background: bool,
    ) -> PyResult<Self> {
        let opts = Options {
            key_size,
            delta,
            t_wait: t_wait_ms.map_or(TWait::Auto, |ms| TWait::Fixed(Duration::from_millis(ms))),
            learning_mode: parse::<LearningMode>(learning_mode)?,
            cba_mode: parse::<CbaMode>(cba_mode)?,
            memtable_bytes: memtable_kb << 10,
            max_file_bytes: max_file_kb << 10,
            level_size_divisor: level_divisor,
            background,
            ..Options::default()
        };
        let engine = py.detach(|| Engine::open(path, opts)).map_err(to_py)?;
        Ok(Store {
            engine: Some(engine),
        })
    }

    fn put(&self, key: &[u8], value: &[u8]) -> PyResult<()> {
        self.engine()?.put(key, value).map_err(to_py)
    }

    fn get<'py>(&self, py: Python<'py>, key: &[u8]) -> PyResult<Option<Bound<'py, PyBytes>>> {
        let v = self.engine()?.get(key).map_err(to_py)?;
        Ok(v.map(|v| PyBytes::new(py, &v)))
    }

    fn delete(&self, key: &[u8]) -> PyResult<()> {
        self.engine()?.delete(key).map_err(to_py)
    }

    fn put_int(&self, key: KeyInt, value: &[u8]) -> PyResult<()> {
        self.engine()?.put_int(key, value).map_err(to_py)
    }

    fn get_int<'py>(&self, py: Python<'py>, key: KeyInt) -> PyResult<Option<Bound<'py, PyBytes>>> {
        let v = self.engine()?.get_int(key).map_err(to_py)?;
        Ok(v.map(|v| PyBytes::new(py, &v)))
    }

    fn delete_int(&self, key: KeyInt) -> PyResult<()> {
        self.engine()?.delete_int(key).map_err(to_py)
    }

    /// Up to `limit` entries with key >= `start`, as `(key, value)` pairs.
    #[pyo3(signature = (start, limit = 100))]
    fn scan<'py>(
        &self,
        py: Python<'py>,
        start: &[u8],
        limit: usize,
    ) -> PyResult<Vec<(Bound<'py, PyBytes>, Bound<'py, PyBytes>)>> {
        let rows = self.engine()?.scan(start, limit).map_err(to_py)?;
        Ok(rows
            .iter()
            .map(|(k, v)| (PyBytes::new(py, k), PyBytes::new(py, v)))
            .collect())
    }

    #[pyo3(signature = (start, limit = 100))]
    fn scan_int<'py>(
        &self,
        py: Python<'py>,
        start: KeyInt,
        limit: usize,
    ) -> PyResult<Vec<(KeyInt, Bound<'py, PyBytes>)>> {
        let rows = self.engine()?.scan_int(start, limit).map_err(to_py)?;
        Ok(rows
            .iter()
            .map(|(k, v)| (*k, PyBytes::new(py, v)))
            .collect())
    }

    fn flush(&self, py: Python<'_>) -> PyResult<()> {
        let e = self.engine()?;
        py.detach(|| e.flush()).map_err(to_py)
    }

    /// Flushes and runs compactions until every level is within its limit.
    fn compact(&self, py: Python<'_>) -> PyResult<()> {
        let e = self.engine()?;
        py.detach(|| e.compact_until_settled()).map_err(to_py)
    }

    /// Trains models for every unlearned file (or level) now; returns the
    /// number built.
    fn learn_all(&self, py: Python<'_>) -> PyResult<usize> {
        let e = self.engine()?;
        py.detach(|| e.learn_all_now()).map_err(to_py)
    }

    #[pyo3(signature = (learning = true))]
    fn wait(&self, py: Python<'_>, learning: bool) -> PyResult<()> {
        let e = self.engine()?;
        py.detach(|| e.wait_for_quiescence(learning)).map_err(to_py)
    }

    #[setter]
    fn set_use_models(&self, on: bool) -> PyResult<()> {
        self.engine()?.set_use_models(on);
        Ok(())
    }

    #[getter]
    fn use_models(&self) -> PyResult<bool> {
        Ok(self.engine()?.use_models())
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.engine()?.stats();
        let d = PyDict::new(py);
        d.set_item("files_per_level", s.files_per_level.to_vec())?;
        d.set_item("records_per_level", s.records_per_level.to_vec())?;
        d.set_item("bytes_per_level", s.bytes_per_level.to_vec())?;
        d.set_item("total_files", s.total_files())?;
        d.set_item("total_records", s.total_records())?;
        d.set_item("learned_files", s.learned_files)?;
        d.set_item("level_models", s.level_models)?;
        d.set_item("model_bytes", s.model_bytes)?;
        d.set_item("flushes", s.flushes)?;
        d.set_item("compactions", s.compactions)?;
        d.set_item("files_learned", s.files_learned)?;
        d.set_item("levels_learned", s.levels_learned)?;
        d.set_item("learning_ns", s.learning_ns)?;
        d.set_item("compaction_ns", s.compaction_ns)?;
        d.set_item("cba_skipped", s.cba_skipped)?;
        d.set_item("model_lookups", s.model_lookups)?;
        d.set_item("baseline_lookups", s.baseline_lookups)?;
        Ok(d)
    }

    /// Tab-separated lookup statistics of completed files and levels.
    fn cba_dump(&self) -> PyResult<String> {
        Ok(self.engine()?.cba().dump_tsv())
    }

    fn close(&mut self, py: Python<'_>) -> PyResult<()> {
        match self.engine.take() {
            Some(e) => py.detach(|| e.close()).map_err(to_py),
            None => Ok(()),
        }
    }

    fn __enter__(slf: Py<Self>) -> Py<Self> {
        slf
    }

    fn __exit__(
        &mut self,
        py: Python<'_>,
        _ty: Py<PyAny>,
        _val: Py<PyAny>,
        _tb: Py<PyAny>,
    ) -> PyResult<bool> {
        self.close(py)?;
        Ok(false)
    }
}

/// A piecewise linear model over sorted keys.
#[pyclass(name = "PlrModel", module = "learned_lsm", frozen)]
struct PyPlrModel(PlrModel);

#[pymethods]
impl PyPlrModel {
    #[staticmethod]
    #[pyo3(signature = (keys, delta = 8))]
    fn fit(py: Python<'_>, keys: Vec<KeyInt>, delta: u32) -> PyResult<Self> {
        py.detach(|| PlrModel::fit(&keys, delta))
            .map(PyPlrModel)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        PlrModel::deserialize(data).map(PyPlrModel).map_err(to_py)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let b = self.0.serialize().map_err(to_py)?;
        Ok(PyBytes::new(py, &b))
    }

    /// `(pos, lo, hi)`, or None outside the trained key range.
    fn predict(&self, key: KeyInt) -> Option<(u64, u64, u64)> {
        self.0.predict(key).map(|p| (p.pos, p.lo, p.hi))
    }

    #[getter]
    fn delta(&self) -> u32 {
        self.0.delta()
    }

    #[getter]
    fn num_points(&self) -> u64 {
        self.0.num_points()
    }

    #[getter]
    fn key_range(&self) -> (KeyInt, KeyInt) {
        self.0.key_range()
    }

    /// `(start_key, slope, intercept)` per segment.
    #[getter]
    fn segments(&self) -> Vec<(KeyInt, f64, f64)> {
        self.0
            .segments()
            .iter()
            .map(|s| (s.start_key, s.slope, s.intercept))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.segment_count()
    }

    fn __repr__(&self) -> String {
        let (lo, hi) = self.0.key_range();
        format!(
            "PlrModel(segments={}, delta={}, points={}, keys={lo}..={hi})",
            self.0.segment_count(),
            self.0.delta(),
            self.0.num_points()
        )
    }
}

/// Sorted keys of a synthetic dataset (`linear`, `seg1pct`, `seg10pct`,
/// `normal`) or `file:PATH`.
#[pyfunction]
#[pyo3(signature = (kind, n, seed = 0))]
fn dataset(py: Python<'_>, kind: &str, n: u64, seed: u64) -> PyResult<Vec<KeyInt>> {
    let kind: DatasetKind = parse(kind)?;
    py.detach(|| gen_dataset(&DatasetSpec::new(kind, n).seed(seed)))
        .map_err(to_py)
}

#[pymodule(name = "learned_lsm")]
pub fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Store>()?;
    m.add_class::<PyPlrModel>()?;
    m.add_function(wrap_pyfunction!(dataset, m)?)?;
    Ok(())
}
