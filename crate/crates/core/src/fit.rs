//! Least-squares power-law fits in log-log coordinates.

use serde::Serialize;

use crate::error::{Error, Result};

/// A fitted power law `y = exp(intercept) * x^slope`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    /// `(ln x, ln y)` pairs the fit was computed from.
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute deviation of a sample from the fitted line.
    pub residual: f64,
}

impl ExponentFit {
    /// Decades of `x` spanned by the samples.
    pub fn decades(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.0), hi.max(s.0)));
        (hi - lo) / std::f64::consts::LN_10
    }
}

/// Fits `ln y = slope ln x + intercept`. Requires at least `min_samples`
/// strictly positive pairs with distinct abscissae.
pub fn fit_power_law(xs: &[f64], ys: &[f64], min_samples: usize) -> Result<ExponentFit> {
    if xs.len() != ys.len() {
        return Err(Error::DegenerateFit(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let samples: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if samples.len() < min_samples.max(2) {
        return Err(Error::DegenerateFit(format!(
            "{} usable samples, need {}",
            samples.len(),
            min_samples.max(2)
        )));
    }
    let k = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / k;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / k;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx <= 1e-300 {
        return Err(Error::DegenerateFit("abscissae do not vary".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = samples
        .iter()
        .map(|s| (s.1 - slope * s.0 - intercept).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        samples,
        slope,
        intercept,
        residual,
    })
}
