//! Log-log slope fits for convergence orders.

use serde::Serialize;

use crate::error::{Error, Result};

/// Errors below this are treated as numerically zero.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    BelowFloor,
}

/// Least-squares slope of log(error) against log(h).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub pairs: Vec<(f64, f64)>,
    pub status: FitStatus,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual in log space.
    pub residual: Option<f64>,
}

impl SlopeFit {
    /// True when the fitted slope reaches `threshold`, or every error is below the floor.
    pub fn meets(&self, threshold: f64) -> bool {
        match self.status {
            FitStatus::BelowFloor => true,
            FitStatus::Fitted => self.slope.is_some_and(|s| s >= threshold),
        }
    }
}

/// Fits error ≈ C·h^slope. Needs at least 3 pairs spanning a factor 4 in h.
pub fn fit_order(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(h, e)| !(h > 0.0) || !e.is_finite()) {
        return Err(Error::Fit("h must be positive and errors finite".into()));
    }
    let hmax = pairs.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let hmin = pairs.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    if hmax / hmin < 4.0 {
        return Err(Error::Fit(format!("h spread {:.3} is below 4", hmax / hmin)));
    }
    if pairs.iter().all(|&(_, e)| e.abs() < ERROR_FLOOR) {
        return Ok(SlopeFit {
            pairs: pairs.to_vec(),
            status: FitStatus::BelowFloor,
            slope: None,
            intercept: None,
            residual: None,
        });
    }
    if pairs.iter().any(|&(_, e)| e <= 0.0) {
        return Err(Error::Fit("errors must be positive for a log-log fit".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        pairs: pairs.to_vec(),
        status: FitStatus::Fitted,
        slope: Some(slope),
        intercept: Some(intercept),
        residual: Some((ss / n).sqrt()),
    })
}
