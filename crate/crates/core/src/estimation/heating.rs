use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::error::{invalid, Error, Result};

/// Fitted temperature after a heating period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingPoint {
    pub duration_s: f64,
    pub temperature_k: f64,
    pub sigma_k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingRate {
    pub rate_k_per_s: f64,
    pub sigma_k_per_s: f64,
    pub intercept_k: f64,
    /// Zero when the intercept was fixed.
    pub intercept_sigma_k: f64,
    pub warnings: Vec<String>,
}

/// Weighted least-squares fit of `T = T0 + rate * t`. With `fixed_intercept`
/// the offset is held at that value and a single point suffices.
pub fn heating_rate_from_points(points: &[HeatingPoint], fixed_intercept: Option<f64>) -> Result<HeatingRate> {
    let needed = if fixed_intercept.is_some() { 1 } else { 2 };
    if points.len() < needed {
        return Err(invalid(format!("heating-rate fit needs at least {needed} points")));
    }
    if points.iter().any(|p| !(p.sigma_k > 0.0) || !(p.duration_s >= 0.0)) {
        return Err(invalid("heating points need sigma > 0 and duration >= 0"));
    }
    let w = |p: &HeatingPoint| 1.0 / (p.sigma_k * p.sigma_k);
    let (rate, sigma, intercept, intercept_sigma) = match fixed_intercept {
        Some(t0) => {
            let sxx: f64 = points.iter().map(|p| w(p) * p.duration_s * p.duration_s).sum();
            let sxy: f64 = points.iter().map(|p| w(p) * p.duration_s * (p.temperature_k - t0)).sum();
            if !(sxx > 0.0) {
                return Err(Error::Numerical("all heating durations are zero".into()));
            }
            (sxy / sxx, sxx.sqrt().recip(), t0, 0.0)
        }
        None => {
            let s: f64 = points.iter().map(w).sum();
            let sx: f64 = points.iter().map(|p| w(p) * p.duration_s).sum();
            let sy: f64 = points.iter().map(|p| w(p) * p.temperature_k).sum();
            let sxx: f64 = points.iter().map(|p| w(p) * p.duration_s * p.duration_s).sum();
            let sxy: f64 = points.iter().map(|p| w(p) * p.duration_s * p.temperature_k).sum();
            let det = s * sxx - sx * sx;
            if !(det > 1e-12 * s * sxx) {
                return Err(Error::Numerical("heating durations must not all coincide".into()));
            }
            ((s * sxy - sx * sy) / det, (s / det).sqrt(), (sxx * sy - sx * sxy) / det, (sxx / det).sqrt())
        }
    };
    let mut warnings = Vec::new();
    if rate <= 0.0 {
        warnings.push(format!("fitted heating rate {rate:.4e} K/s is not positive"));
    }
    Ok(HeatingRate { rate_k_per_s: rate, sigma_k_per_s: sigma, intercept_k: intercept, intercept_sigma_k: intercept_sigma, warnings })
}

/// Heating rate from fits paired with their heating durations.
pub fn heating_rate_from_fits(results: &[(f64, FitResult)], fixed_intercept: Option<f64>) -> Result<HeatingRate> {
    let points: Vec<HeatingPoint> = results
        .iter()
        .map(|(t, f)| HeatingPoint { duration_s: *t, temperature_k: f.temperature_k, sigma_k: f.sigma_k })
        .collect();
    heating_rate_from_points(&points, fixed_intercept)
}
