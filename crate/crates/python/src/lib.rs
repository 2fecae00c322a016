//! Python bindings for `dot_curriculum`.
//!
//! Records cross the boundary as plain dicts/lists with the same shape as the
//! JSONL files the CLI reads and writes, so Python code can mix the two.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use dot_curriculum::analyzer;
use dot_curriculum::bucketer::{self, Bucket, BucketSpec};
use dot_curriculum::corpus::{self, DoTScore, Example, RawTrace, Trace};
use dot_curriculum::scheduler::{self, MixWindow, Ordering, SchedulePlan, ScheduleMode};
use dot_curriculum::scorer;
use dot_curriculum::segmenter::{self, SegmentationRules};
use dot_curriculum::synthetic::{self, TeacherSim, TraceStyle};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Rust value → Python object, via JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Python object → Rust value, via JSON.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn rules(min_step_chars: usize, allow_paragraph_fallback: bool) -> SegmentationRules {
    SegmentationRules {
        min_step_chars,
        allow_paragraph_fallback,
        ..SegmentationRules::default()
    }
}

/// Whitespace token count used for `tok`.
#[pyfunction]
fn count_tokens(text: &str) -> usize {
    corpus::count_tokens(text)
}

/// `k / ln(1 + tok)`.
#[pyfunction]
fn dot_norm(k: u32, tok: u64) -> PyResult<f64> {
    if k == 0 || tok == 0 {
        return Err(err("k and tok must be positive"));
    }
    Ok(scorer::dot_norm(k, tok))
}

/// Splits a trace into steps. Returns `{"steps": [...], "mode": ..., "confidence": ...}`.
#[pyfunction]
#[pyo3(signature = (text, min_step_chars = 3, allow_paragraph_fallback = true))]
fn segment(py: Python<'_>, text: &str, min_step_chars: usize, allow_paragraph_fallback: bool) -> PyResult<Py<PyAny>> {
    let s = segmenter::segment(text, &rules(min_step_chars, allow_paragraph_fallback)).map_err(err)?;
    let steps: Vec<&str> = s.steps.iter().map(|st| st.text.as_str()).collect();
    to_py(
        py,
        &serde_json::json!({"steps": steps, "mode": s.mode, "confidence": s.confidence}),
    )
}

/// Segments raw trace records (`example_id`, `teacher_id`, `raw_text`) into
/// trace records.
#[pyfunction]
#[pyo3(signature = (raw_traces, min_step_chars = 3, allow_paragraph_fallback = true))]
fn segment_traces(
    py: Python<'_>,
    raw_traces: &Bound<'_, PyAny>,
    min_step_chars: usize,
    allow_paragraph_fallback: bool,
) -> PyResult<Py<PyAny>> {
    let raws: Vec<RawTrace> = from_py(raw_traces)?;
    let r = rules(min_step_chars, allow_paragraph_fallback);
    let traces = raws
        .iter()
        .map(|t| segmenter::segment_trace(t, &r))
        .collect::<Result<Vec<Trace>, _>>()
        .map_err(err)?;
    to_py(py, &traces)
}

/// Scores trace records. Returns `(scores, failures)`.
#[pyfunction]
fn score_traces(py: Python<'_>, traces: &Bound<'_, PyAny>) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let traces: Vec<Trace> = from_py(traces)?;
    let out = scorer::score_corpus(&traces);
    Ok((to_py(py, &out.scores)?, to_py(py, &out.failures)?))
}

/// Groups scores into depth buckets. Returns `(buckets, overflow)`.
#[pyfunction]
#[pyo3(signature = (scores, examples, edges = "1-3,4-6,7+", max_task_share = 1.0))]
fn bucketize(
    py: Python<'_>,
    scores: &Bound<'_, PyAny>,
    examples: &Bound<'_, PyAny>,
    edges: &str,
    max_task_share: f64,
) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let scores: Vec<DoTScore> = from_py(scores)?;
    let examples: Vec<Example> = from_py(examples)?;
    let mut spec: BucketSpec = edges.parse().map_err(err)?;
    spec.max_task_share = max_task_share;
    let b = bucketer::bucketize(&scores, &examples, &spec).map_err(err)?;
    Ok((to_py(py, &b.buckets)?, to_py(py, &b.overflow)?))
}

/// Text table describing buckets.
#[pyfunction]
fn bucket_report(buckets: &Bound<'_, PyAny>) -> PyResult<String> {
    let buckets: Vec<Bucket> = from_py(buckets)?;
    Ok(bucketer::describe(&buckets).to_text())
}

#[allow(clippy::too_many_arguments)]
fn plan(
    mode: &str,
    phases: usize,
    budget: usize,
    alpha: f64,
    seed: u64,
    with_replacement: bool,
    mix_window: &str,
) -> PyResult<SchedulePlan> {
    let mode = match mode {
        "staged" => ScheduleMode::Staged,
        "mixed" => ScheduleMode::Mixed,
        other => return Err(err(format!("unknown mode {other:?}"))),
    };
    let mix_window = match mix_window {
        "union" => MixWindow::Union,
        "adjacent" => MixWindow::Adjacent,
        other => return Err(err(format!("unknown mix window {other:?}"))),
    };
    Ok(SchedulePlan {
        mode,
        alpha,
        phases,
        budget_per_phase: budget,
        seed,
        with_replacement,
        mix_window,
    })
}

/// Builds a curriculum manifest and returns it as JSONL text (header line
/// followed by one line per phase).
#[pyfunction]
#[pyo3(signature = (buckets, budget, mode = "staged", phases = None, alpha = 1.0, seed = 42, with_replacement = false, mix_window = "union"))]
#[allow(clippy::too_many_arguments)]
fn build_curriculum(
    buckets: &Bound<'_, PyAny>,
    budget: usize,
    mode: &str,
    phases: Option<usize>,
    alpha: f64,
    seed: u64,
    with_replacement: bool,
    mix_window: &str,
) -> PyResult<String> {
    let buckets: Vec<Bucket> = from_py(buckets)?;
    let p = plan(mode, phases.unwrap_or(buckets.len()), budget, alpha, seed, with_replacement, mix_window)?;
    let m = scheduler::build_curriculum(&buckets, &p).map_err(err)?;
    Ok(m.to_jsonl())
}

/// Baseline manifest (`token-length`, `judge-score`, or `random`) as JSONL.
#[pyfunction]
#[pyo3(signature = (examples, kind, phases, budget, traces = None, seed = 42))]
fn baseline_order(
    py: Python<'_>,
    examples: &Bound<'_, PyAny>,
    kind: &str,
    phases: usize,
    budget: usize,
    traces: Option<&Bound<'_, PyAny>>,
    seed: u64,
) -> PyResult<String> {
    let examples: Vec<Example> = from_py(examples)?;
    let traces: Vec<Trace> = match traces {
        Some(t) => from_py(t)?,
        None => Vec::new(),
    };
    let kind: Ordering = from_py(&to_py(py, &kind)?.into_bound(py))?;
    let p = SchedulePlan::staged(phases, budget, seed);
    let m = scheduler::baseline_order(&examples, &traces, kind, &p).map_err(err)?;
    Ok(m.to_jsonl())
}

/// Per-phase example id lists of a manifest in JSONL form.
#[pyfunction]
fn manifest_phases(jsonl: &str) -> PyResult<Vec<Vec<String>>> {
    let m = scheduler::CurriculumManifest::from_jsonl(jsonl).map_err(err)?;
    Ok(m.phases.into_iter().map(|p| p.example_ids).collect())
}

/// Normalized `i^alpha` weights for buckets `1..=t`.
#[pyfunction]
fn phase_weights(t: usize, alpha: f64) -> PyResult<Vec<f64>> {
    if t == 0 || !(alpha.is_finite() && alpha >= 0.0) {
        return Err(err("t must be >= 1 and alpha finite and >= 0"));
    }
    Ok(scheduler::phase_weights(t, alpha))
}

#[pyfunction]
fn spearman(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    analyzer::spearman(&xs, &ys).map_err(err)
}

#[pyfunction]
fn kendall_tau(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    analyzer::kendall_tau(&xs, &ys).map_err(err)
}

/// Pairwise Kendall tau-b of step and token counts across teachers.
#[pyfunction]
fn cross_teacher_agreement(py: Python<'_>, scores: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let scores: Vec<DoTScore> = from_py(scores)?;
    let mut by_teacher: BTreeMap<String, Vec<DoTScore>> = BTreeMap::new();
    for s in scores {
        by_teacher.entry(s.teacher_id.clone()).or_default().push(s);
    }
    to_py(py, &analyzer::cross_teacher_agreement(&by_teacher).map_err(err)?)
}

/// Length-confound diagnostics for scores against aligned labels.
#[pyfunction]
fn length_confound(py: Python<'_>, scores: &Bound<'_, PyAny>, labels: Vec<f64>) -> PyResult<Py<PyAny>> {
    let scores: Vec<DoTScore> = from_py(scores)?;
    to_py(py, &analyzer::length_confound(&scores, &labels).map_err(err)?)
}

#[pyfunction]
fn read_corpus(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &corpus::read_corpus(path).map_err(err)?)
}

/// Synthetic corpus with planted difficulty in `external_difficulty`.
#[pyfunction]
#[pyo3(signature = (n, seed = 42))]
fn planted_corpus(py: Python<'_>, n: usize, seed: u64) -> PyResult<Py<PyAny>> {
    to_py(py, &synthetic::planted_corpus(n, seed))
}

/// Simulated raw traces for a corpus (see `planted_corpus`).
#[pyfunction]
#[pyo3(signature = (examples, teacher_id = "synthetic-teacher", style = "mixed", verbosity = 1.0, seed = 43, samples = 1))]
fn simulate_teacher(
    py: Python<'_>,
    examples: &Bound<'_, PyAny>,
    teacher_id: &str,
    style: &str,
    verbosity: f64,
    seed: u64,
    samples: u32,
) -> PyResult<Py<PyAny>> {
    let examples: Vec<Example> = from_py(examples)?;
    let style = match style {
        "numbered" => TraceStyle::Numbered,
        "labeled" => TraceStyle::Labeled,
        "bulleted" => TraceStyle::Bulleted,
        "mixed" => TraceStyle::Mixed,
        other => return Err(err(format!("unknown style {other:?}"))),
    };
    let teacher = TeacherSim {
        teacher_id: teacher_id.into(),
        style,
        verbosity,
        seed,
    };
    to_py(py, &synthetic::simulate_teacher(&examples, &teacher, samples))
}

/// Runs the `dotc` command line with the given arguments; returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    dot_curriculum::cli::run(std::iter::once("dotc".to_string()).chain(args))
}

#[pymodule]
fn dotcurriculum(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SCORER_VERSION", scorer::SCORER_VERSION)?;
    m.add_function(wrap_pyfunction!(count_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(dot_norm, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(segment_traces, m)?)?;
    m.add_function(wrap_pyfunction!(score_traces, m)?)?;
    m.add_function(wrap_pyfunction!(bucketize, m)?)?;
    m.add_function(wrap_pyfunction!(bucket_report, m)?)?;
    m.add_function(wrap_pyfunction!(build_curriculum, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_order, m)?)?;
    m.add_function(wrap_pyfunction!(manifest_phases, m)?)?;
    m.add_function(wrap_pyfunction!(phase_weights, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(cross_teacher_agreement, m)?)?;
    m.add_function(wrap_pyfunction!(length_confound, m)?)?;
    m.add_function(wrap_pyfunction!(read_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(planted_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_teacher, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
