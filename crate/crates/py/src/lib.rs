//! Python bindings for the matrix-game analyzer, reward smoothing and
//! shaping primitives, and the estimate-propagation trace dump.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use fairgrid::dilemma::{classify as classify_matrix, PayoffMatrix};
use fairgrid::harness::trace_str;
use fairgrid::shaping;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parse a matrix-game file and classify it.
/// Returns (kind, asymmetric, {agent: all_dilemma_conditions_hold}).
#[pyfunction]
fn classify_game(text: &str) -> PyResult<(String, bool, Vec<(String, bool)>)> {
    let matrix = PayoffMatrix::parse_str(text).map_err(value_err)?;
    let report = classify_matrix(&matrix).map_err(value_err)?;
    let conditions = report
        .conditions
        .iter()
        .map(|(agent, c)| (agent.clone(), c.c1 && c.c2 && c.c3 && c.greed && c.fear))
        .collect();
    Ok((report.kind.as_str().to_owned(), report.asymmetric, conditions))
}

/// Min-max normalize each agent's payoffs and return the game in the same
/// file format.
#[pyfunction]
fn normalize_game(text: &str) -> PyResult<String> {
    let matrix = PayoffMatrix::parse_str(text).map_err(value_err)?;
    Ok(matrix.normalized().map_err(value_err)?.to_file_string())
}

/// Run a visibility trace file and return the estimate-table dump CSV.
#[pyfunction]
fn trace_table_dump(text: &str) -> PyResult<String> {
    trace_str(text).map_err(value_err)
}

/// Inequity penalty: envy-weighted plus guilt-weighted mean gaps.
#[pyfunction]
fn inequity_penalty(
    own: f64,
    others: Vec<f64>,
    alpha: f64,
    beta: f64,
    n_agents: usize,
) -> PyResult<f64> {
    shaping::ia_penalty(own, &others, alpha, beta, n_agents).map_err(value_err)
}

/// Angle in degrees between own value and the mean of the others' values.
#[pyfunction]
fn reward_angle(own: f64, others: Vec<f64>) -> PyResult<f64> {
    shaping::svo_angle(own, &others).map_err(value_err)
}

/// Weighted absolute deviation from the target angle.
#[pyfunction]
fn angle_penalty(angle_deg: f64, target_deg: f64, w: f64) -> f64 {
    shaping::svo_penalty(angle_deg, target_deg, w)
}

/// Exponentially smoothed per-agent reward with running extrema.
#[pyclass]
struct SmoothedTracker {
    inner: shaping::SmoothedTracker,
}

#[pymethods]
impl SmoothedTracker {
    #[new]
    fn new() -> Self {
        SmoothedTracker { inner: shaping::SmoothedTracker::new() }
    }

    fn update(&mut self, reward: f64, gamma: f64, lambda: f64) -> PyResult<()> {
        self.inner.update(reward, gamma, lambda).map_err(value_err)
    }

    fn value(&self) -> f64 {
        self.inner.value()
    }

    fn normalized(&self) -> PyResult<f64> {
        self.inner.normalized().map_err(value_err)
    }

    fn range(&self) -> Option<f64> {
        self.inner.range()
    }
}

#[pymodule]
fn fairgrid_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(classify_game, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_game, m)?)?;
    m.add_function(wrap_pyfunction!(trace_table_dump, m)?)?;
    m.add_function(wrap_pyfunction!(inequity_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(reward_angle, m)?)?;
    m.add_function(wrap_pyfunction!(angle_penalty, m)?)?;
    m.add_class::<SmoothedTracker>()?;
    Ok(())
}
