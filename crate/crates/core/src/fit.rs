//! Least-squares slopes on log-log data.

use crate::error::{Error, Result};

/// Slope of the least-squares line through `(ln x_i, ln y_i)`.
///
/// Rejects fewer than two points, non-positive values and degenerate abscissae.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least two paired points, got {} and {}", x.len(), y.len())));
    }
    if let Some(bad) = x.iter().chain(y).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::DegenerateFit(format!("non-positive or non-finite value {bad}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, &ly)
}

/// Slope of the ordinary least-squares line through `(x_i, y_i)`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::DegenerateFit("abscissae do not vary".into()));
    }
    Ok(sxy / sxx)
}
