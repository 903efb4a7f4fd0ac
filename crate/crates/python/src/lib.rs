//! Python bindings: sequences, DTW, the LB_Kim bound, retrieval, cost
//! measurement and the synthetic generator.
//!
//! Reports are handed to Python as plain dicts/lists decoded from the same
//! JSON the CLI writes.

use std::fs::File;
use std::io::BufReader;

use pose_dtw::cost::{measure_workload, StrategySet};
use pose_dtw::dataset::{read_records, DatasetRecord, NormalizedRecord};
use pose_dtw::dtw::{dtw_alignment, dtw_distance};
use pose_dtw::keypoints::{KeypointFrame, RawJoint, RawKeypointFrame, BODY_JOINT_COUNT, DEFAULT_CONFIDENCE_FLOOR};
use pose_dtw::lower_bound::LbIndex;
use pose_dtw::retrieval::{build_gallery, evaluate_detailed, EvalOptions, GalleryEntry, MatchConfig};
use pose_dtw::synthetic::{build_benchmark, default_conditions, BenchmarkConfig};
use pose_dtw::{DtwConfig, Window};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializes through JSON into native Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A normalized 12-joint pose sequence.
#[pyclass(name = "PoseSequence", module = "pose_dtw", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPoseSequence {
    inner: pose_dtw::PoseSequence,
}

#[pymethods]
impl PyPoseSequence {
    /// `frames`: one list of 12 `[x, y]` pairs per frame, already normalized.
    #[new]
    #[pyo3(signature = (id, camera_tag, condition_tag, frames, frame_rate=25, frame_indices=None))]
    fn new(
        id: &str,
        camera_tag: &str,
        condition_tag: &str,
        frames: Vec<Vec<[f64; 2]>>,
        frame_rate: u32,
        frame_indices: Option<Vec<u64>>,
    ) -> PyResult<Self> {
        let indices = frame_indices.unwrap_or_else(|| (0..frames.len() as u64).collect());
        if indices.len() != frames.len() {
            return Err(err("frame_indices must have one entry per frame"));
        }
        let frames = frames
            .iter()
            .zip(indices)
            .map(|(f, idx)| {
                let coords: [[f64; 2]; BODY_JOINT_COUNT] =
                    f.as_slice().try_into().map_err(|_| err(format!("expected {BODY_JOINT_COUNT} joints per frame")))?;
                KeypointFrame::from_coords(coords, idx).map_err(err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = pose_dtw::PoseSequence::new(id, camera_tag, condition_tag, frames, frame_rate).map_err(err)?;
        Ok(Self { inner })
    }

    /// Normalizes and imputes raw COCO-17 `[x, y, confidence]` frames.
    #[staticmethod]
    #[pyo3(signature = (id, camera_tag, condition_tag, frames, frame_rate=25, confidence_floor=DEFAULT_CONFIDENCE_FLOOR))]
    fn from_raw(
        id: &str,
        camera_tag: &str,
        condition_tag: &str,
        frames: Vec<Vec<[f64; 3]>>,
        frame_rate: u32,
        confidence_floor: f64,
    ) -> PyResult<Self> {
        let raw = frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let joints: Vec<RawJoint> = f.iter().map(|&[x, y, c]| RawJoint::new(x, y, c)).collect();
                RawKeypointFrame::new(&joints, t as u64).map_err(err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        let rec = DatasetRecord::from_raw_frames(id, camera_tag, condition_tag, frame_rate, &raw);
        Ok(Self { inner: rec.to_sequence(confidence_floor).map_err(err)? })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn camera_tag(&self) -> &str {
        self.inner.camera_tag()
    }

    #[getter]
    fn condition_tag(&self) -> &str {
        self.inner.condition_tag()
    }

    #[getter]
    fn frame_rate(&self) -> u32 {
        self.inner.frame_rate()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Frames as nested lists, `len x 12 x 2`.
    fn frames(&self) -> Vec<Vec<[f64; 2]>> {
        self.inner.frames().iter().map(|f| f.coords().to_vec()).collect()
    }

    fn norm_series(&self) -> Vec<f64> {
        pose_dtw::norm_series(&self.inner).values().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "PoseSequence(id={:?}, condition_tag={:?}, frames={})",
            self.inner.id(),
            self.inner.condition_tag(),
            self.inner.len()
        )
    }
}

/// Matching thresholds. `w=None` disables the band, `upsilon`/`epsilon`
/// of `inf` disable abandoning and the prefilter.
#[pyclass(name = "MatchConfig", module = "pose_dtw", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMatchConfig {
    inner: MatchConfig,
}

#[pymethods]
impl PyMatchConfig {
    #[new]
    #[pyo3(signature = (w=Some(30), upsilon=8.0, epsilon=0.8, window_ratio=None))]
    fn new(w: Option<usize>, upsilon: f64, epsilon: f64, window_ratio: Option<f64>) -> PyResult<Self> {
        let window = match (window_ratio, w) {
            (Some(r), _) => Window::Ratio(r),
            (None, Some(w)) => Window::Absolute(w),
            (None, None) => Window::Unconstrained,
        };
        Ok(Self { inner: MatchConfig::new(window, upsilon, epsilon).map_err(err)? })
    }

    #[getter]
    fn w(&self) -> Option<usize> {
        match self.inner.dtw.window {
            Window::Absolute(w) => Some(w),
            _ => None,
        }
    }

    #[getter]
    fn upsilon(&self) -> f64 {
        self.inner.dtw.abandon_threshold
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    fn __repr__(&self) -> String {
        format!("MatchConfig({:?})", self.inner)
    }
}

fn window_of(w: Option<usize>) -> Window {
    w.map_or(Window::Unconstrained, Window::Absolute)
}

/// Banded, early-abandoning DTW. Returns a dict with `distance` (None when
/// abandoned), `cells_evaluated` and, if requested, the 1-based `path`.
#[pyfunction]
#[pyo3(signature = (query, candidate, w=None, upsilon=f64::INFINITY, with_path=false))]
fn dtw<'py>(
    py: Python<'py>,
    query: &PyPoseSequence,
    candidate: &PyPoseSequence,
    w: Option<usize>,
    upsilon: f64,
    with_path: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DtwConfig::new(window_of(w), upsilon).map_err(err)?;
    let out = if with_path { dtw_alignment(&query.inner, &candidate.inner, &cfg) } else { dtw_distance(&query.inner, &candidate.inner, &cfg) }
        .map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("distance", out.distance())?;
    dict.set_item("abandoned", out.is_abandoned())?;
    dict.set_item("cells_evaluated", out.cells_evaluated())?;
    dict.set_item("path", out.path().map(|p| p.to_vec()))?;
    Ok(dict.into_any())
}

/// LB_Kim between the norm series of two sequences.
#[pyfunction]
fn lb_kim(a: &PyPoseSequence, b: &PyPoseSequence) -> PyResult<f64> {
    let (fa, fb) = (LbIndex::new(&a.inner).map_err(err)?, LbIndex::new(&b.inner).map_err(err)?);
    Ok(pose_dtw::lb_kim(&fa.features, &fb.features))
}

/// Cells of an `m x n` grid outside a band of half-width `w`.
#[pyfunction]
fn s_out(m: usize, n: usize, w: usize) -> u64 {
    pose_dtw::s_out(m, n, w)
}

fn gallery_of(seqs: &[PyRef<'_, PyPoseSequence>]) -> PyResult<Vec<GalleryEntry>> {
    build_gallery(seqs.iter().map(|s| s.inner.clone())).map_err(err)
}

fn config_or_default(config: Option<&PyMatchConfig>) -> MatchConfig {
    config.map_or_else(MatchConfig::default, |c| c.inner)
}

/// Ranks `gallery` against `query`; entries carry `distance = None` when
/// pruned.
#[pyfunction]
#[pyo3(signature = (query, gallery, config=None))]
fn match_query<'py>(
    py: Python<'py>,
    query: &PyPoseSequence,
    gallery: Vec<PyRef<'py, PyPoseSequence>>,
    config: Option<&PyMatchConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let gallery = gallery_of(&gallery)?;
    let cfg = config_or_default(config);
    let list = py.detach(|| pose_dtw::match_query(&query.inner, &gallery, &cfg)).map_err(err)?;
    to_py(py, &list)
}

/// CMC and mAP of `queries` against `gallery`.
#[pyfunction]
#[pyo3(signature = (queries, gallery, config=None, exclude_same_condition=true))]
fn evaluate<'py>(
    py: Python<'py>,
    queries: Vec<PyRef<'py, PyPoseSequence>>,
    gallery: Vec<PyRef<'py, PyPoseSequence>>,
    config: Option<&PyMatchConfig>,
    exclude_same_condition: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let gallery = gallery_of(&gallery)?;
    let queries: Vec<_> = queries.iter().map(|q| q.inner.clone()).collect();
    let cfg = config_or_default(config);
    let opts = EvalOptions { exclude_same_condition };
    let (report, _, _) = py.detach(|| evaluate_detailed(&queries, &gallery, &cfg, &opts)).map_err(err)?;
    to_py(py, &report)
}

/// Measured and predicted DP cells for one strategy set, e.g. `"GC+LB+EA"`.
#[pyfunction]
#[pyo3(signature = (queries, gallery, strategies, config=None))]
fn measure_cost<'py>(
    py: Python<'py>,
    queries: Vec<PyRef<'py, PyPoseSequence>>,
    gallery: Vec<PyRef<'py, PyPoseSequence>>,
    strategies: &str,
    config: Option<&PyMatchConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let set: StrategySet = strategies.parse().map_err(err)?;
    let gallery = gallery_of(&gallery)?;
    let queries: Vec<_> = queries.iter().map(|q| q.inner.clone()).collect();
    let cfg = config_or_default(config);
    let report = py.detach(|| measure_workload(&queries, &gallery, &cfg, set)).map_err(err)?;
    to_py(py, &report)
}

/// Synthetic benchmark: `(sequences, manifest)`.
#[pyfunction]
#[pyo3(signature = (identities=41, conditions=4, frames=40, seed=0, noise=0.0, dropout=0.0))]
fn synth<'py>(
    py: Python<'py>,
    identities: usize,
    conditions: usize,
    frames: usize,
    seed: u64,
    noise: f64,
    dropout: f64,
) -> PyResult<(Vec<PyPoseSequence>, Bound<'py, PyAny>)> {
    let cfg = BenchmarkConfig::new(identities, default_conditions(conditions, noise, dropout), frames, seed);
    let bench = py.detach(|| build_benchmark(&cfg)).map_err(err)?;
    let seqs = bench.sequences().map_err(err)?.into_iter().map(|inner| PyPoseSequence { inner }).collect();
    Ok((seqs, to_py(py, &bench.manifest)?))
}

/// Reads a JSONL dataset (raw or normalized records).
#[pyfunction]
#[pyo3(signature = (path, confidence_floor=DEFAULT_CONFIDENCE_FLOOR))]
fn read_dataset(path: &str, confidence_floor: f64) -> PyResult<Vec<PyPoseSequence>> {
    let file = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
    read_records(BufReader::new(file))
        .map_err(err)?
        .into_iter()
        .map(|(line, rec)| {
            rec.to_sequence(confidence_floor)
                .map(|inner| PyPoseSequence { inner })
                .map_err(|e| err(format!("line {line}: {e}")))
        })
        .collect()
}

/// One normalized JSONL line for a sequence.
#[pyfunction]
fn to_jsonl(seq: &PyPoseSequence) -> PyResult<String> {
    serde_json::to_string(&NormalizedRecord::from_sequence(&seq.inner)).map_err(err)
}

#[pymodule]
#[pyo3(name = "pose_dtw")]
fn pose_dtw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoseSequence>()?;
    m.add_class::<PyMatchConfig>()?;
    m.add_function(wrap_pyfunction!(dtw, m)?)?;
    m.add_function(wrap_pyfunction!(lb_kim, m)?)?;
    m.add_function(wrap_pyfunction!(s_out, m)?)?;
    m.add_function(wrap_pyfunction!(match_query, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(measure_cost, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(to_jsonl, m)?)?;
    m.add("DEFAULT_WINDOW", pose_dtw::dtw::DEFAULT_WINDOW)?;
    m.add("DEFAULT_UPSILON", pose_dtw::dtw::DEFAULT_ABANDON_THRESHOLD)?;
    m.add("DEFAULT_EPSILON", pose_dtw::retrieval::DEFAULT_EPSILON)?;
    Ok(())
}
