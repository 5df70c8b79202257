//! Python bindings for the trapkit core: the four clustering primitives,
//! the DBCV validity index, and end-to-end trap selection over real
//! directory trees. Matrices are plain `list[list[float]]`; everything is
//! deterministic given (input, seed).

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use trapkit::cluster::{
    affinity::Preference, affinity_propagation as ap_core, dbcv as dbcv_core, estimate_bandwidth,
    gmm_select, mean_shift as ms_core, optics as optics_core, similarity_matrix, ApOptions,
    ClusterResult, Criterion, GmmOptions, MeanShiftOptions,
};
use trapkit::features::ScanConfig;
use trapkit::traps::{select_traps as select_core, SelectionMethod, SelectionOptions};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn labels_and_exemplars(result: ClusterResult) -> (Vec<usize>, Vec<usize>) {
    (result.labels, result.exemplars)
}

/// OPTICS reachability analysis: returns (order, reachability, core_distance).
#[pyfunction]
#[pyo3(signature = (points, min_pts=5))]
fn optics(points: Vec<Vec<f64>>, min_pts: usize) -> PyResult<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let out = optics_core(&points, min_pts).map_err(err)?;
    Ok((out.order, out.reachability, out.core_distance))
}

/// Affinity propagation with median preference: returns (labels, exemplars).
#[pyfunction]
#[pyo3(signature = (points, damping=0.9))]
fn affinity_propagation(
    points: Vec<Vec<f64>>,
    damping: f64,
) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let s = similarity_matrix(&points, Preference::Median);
    let options = ApOptions {
        damping,
        ..ApOptions::default()
    };
    Ok(labels_and_exemplars(ap_core(&s, &options).map_err(err)?))
}

/// Mean shift with a quantile-estimated bandwidth: returns (labels, exemplars).
#[pyfunction]
#[pyo3(signature = (points, quantile=0.3))]
fn mean_shift(points: Vec<Vec<f64>>, quantile: f64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let bandwidth = estimate_bandwidth(&points, quantile).map_err(err)?;
    let options = MeanShiftOptions::with_bandwidth(bandwidth);
    Ok(labels_and_exemplars(ms_core(&points, &options).map_err(err)?))
}

/// BIC-selected Gaussian mixture: returns (labels, exemplars, k, log_likelihood).
#[pyfunction]
#[pyo3(signature = (points, k_max=10, seed=0))]
fn gmm(
    points: Vec<Vec<f64>>,
    k_max: usize,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<usize>, usize, f64)> {
    let (result, model) = gmm_select(&points, k_max, Criterion::Bic, 5, seed, &GmmOptions::default())
        .map_err(err)?;
    let k = model.k();
    let ll = model.log_likelihood;
    let (labels, exemplars) = labels_and_exemplars(result);
    Ok((labels, exemplars, k, ll))
}

/// Density-based clustering validity (DBCV) of a labeling, in [-1, 1].
#[pyfunction]
fn dbcv(points: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    Ok(dbcv_core(&points, &labels).map_err(err)?.score)
}

/// Select trap files under `roots` with the given method ("ap", "gmm",
/// "meanshift", "optics", or "apfo"). Returns the trap file paths.
#[pyfunction]
#[pyo3(signature = (roots, method="apfo", seed=0))]
fn select_trap_paths(roots: Vec<PathBuf>, method: &str, seed: u64) -> PyResult<Vec<PathBuf>> {
    let method = SelectionMethod::from_str(method).map_err(err)?;
    let config = ScanConfig::new(roots);
    let options = SelectionOptions {
        seed,
        ..SelectionOptions::default()
    };
    let list = select_core(&config, method, &options, &mut Vec::new()).map_err(err)?;
    Ok(list.entries.into_iter().map(|e| e.original_path).collect())
}

#[pymodule]
fn trapkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(optics, m)?)?;
    m.add_function(wrap_pyfunction!(affinity_propagation, m)?)?;
    m.add_function(wrap_pyfunction!(mean_shift, m)?)?;
    m.add_function(wrap_pyfunction!(gmm, m)?)?;
    m.add_function(wrap_pyfunction!(dbcv, m)?)?;
    m.add_function(wrap_pyfunction!(select_trap_paths, m)?)?;
    Ok(())
}
