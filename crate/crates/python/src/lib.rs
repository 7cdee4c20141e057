use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use ssf_lab::coefficients::{self, CoeffParams};
use ssf_lab::harness::fit::{fit_order as fit, FitStatus};
use ssf_lab::harness::{run, ExperimentConfig, Family};
use ssf_lab::symbols::{model_potential, reference_potential, MatrixPotential, ModelSpec};

fn err(e: ssf_lab::Error) -> PyErr {
    match e {
        ssf_lab::Error::Config(_)
        | ssf_lab::Error::InvalidParameter(_)
        | ssf_lab::Error::Fit(_)
        | ssf_lab::Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Potential from a JSON model description; the reference potential when absent.
fn potential(spec: Option<&str>) -> PyResult<MatrixPotential> {
    match spec {
        None => Ok(reference_potential()),
        Some(s) => {
            let spec: ModelSpec = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
            model_potential(&spec).map_err(err)
        }
    }
}

/// γ₀(τ), the density of the phase-space volume derivative.
#[pyfunction]
#[pyo3(signature = (tau, potential_json=None, n=1))]
fn gamma0(tau: f64, potential_json: Option<&str>, n: usize) -> PyResult<f64> {
    let v = potential(potential_json)?;
    coefficients::gamma0(&v, tau, n, &CoeffParams::default()).map_err(err)
}

/// a₀(τ), the leading Weyl coefficient of the spectral shift.
#[pyfunction]
#[pyo3(signature = (tau, potential_json=None, n=1))]
fn a0(tau: f64, potential_json: Option<&str>, n: usize) -> PyResult<f64> {
    let v = potential(potential_json)?;
    coefficients::a0(&v, tau, n, &CoeffParams::default()).map_err(err)
}

/// Log-log slope of (h, error) pairs; None when every error is below the floor.
#[pyfunction]
fn fit_order(pairs: Vec<(f64, f64)>) -> PyResult<(Option<f64>, bool)> {
    let f = fit(&pairs).map_err(err)?;
    Ok((f.slope, f.status == FitStatus::BelowFloor))
}

/// Runs a JSON config; returns (exit code, verdict per experiment).
#[pyfunction]
#[pyo3(signature = (config_json, out_dir, subcommand="sweep", workers=None))]
fn run_config(
    py: Python<'_>,
    config_json: &str,
    out_dir: &str,
    subcommand: &str,
    workers: Option<usize>,
) -> PyResult<(i32, BTreeMap<String, String>)> {
    let family = match subcommand {
        "check-mh" => Family::CheckMh,
        "check-escape" => Family::CheckEscape,
        "coeffs" => Family::Coeffs,
        "trace" => Family::Trace,
        "ssf" => Family::Ssf,
        "sweep" => Family::Sweep,
        other => return Err(PyValueError::new_err(format!("unknown subcommand {other}"))),
    };
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let out = Path::new(out_dir).to_path_buf();
    let summary = py
        .detach(move || {
            let s = run(&cfg, family, workers)?;
            s.write(&out)?;
            Ok::<_, ssf_lab::Error>(s)
        })
        .map_err(err)?;
    Ok((summary.exit_code(), summary.report.verdicts.clone()))
}

#[pymodule]
fn ssf_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gamma0, m)?)?;
    m.add_function(wrap_pyfunction!(a0, m)?)?;
    m.add_function(wrap_pyfunction!(fit_order, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
