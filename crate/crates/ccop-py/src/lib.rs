//! Python bindings for the ccop analysis pipeline.
//!
//! Exposes the same analysis the CLI runs, returning the deterministic JSON
//! report as a string so Python callers can `json.loads` it.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ccop::cli::{analyze_file, AnalyzeOptions};
use ccop::report::to_json;

/// Analyze a problem file and return the JSON report as a string.
///
/// `exit_code`-equivalent information is folded into the report itself: an
/// indeterminate classification shows up as `"indeterminate"` fields, and
/// callers that care can inspect them. Input errors raise `ValueError`.
#[pyfunction]
#[pyo3(signature = (path, tol = 1e-8, seeds = 64, rng_seed = 0, sosc_samples = 10_000))]
fn analyze(
    path: &str,
    tol: f64,
    seeds: usize,
    rng_seed: u64,
    sosc_samples: usize,
) -> PyResult<String> {
    let opts = AnalyzeOptions {
        tol,
        seeds,
        rng_seed,
        sosc_samples,
    };
    let (report, _code) = analyze_file(Path::new(path), &opts)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(to_json(&report))
}

#[pymodule]
fn ccop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
