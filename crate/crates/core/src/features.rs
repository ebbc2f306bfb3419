//! Per-feature summary statistics of a window, the data half of the
//! planner's state.

use crate::{CoreError, Result};
use ndarray::Array2;

/// mean, volatility, momentum, skewness, excess kurtosis and trend for
/// each feature column. Zero-variance columns map skewness and kurtosis
/// to 0 by convention.
#[derive(Debug, Clone)]
pub struct DataStateFeatures {
    /// One row per feature: [mean, volatility, momentum, skewness,
    /// kurtosis, trend].
    pub rows: Vec<[f64; 6]>,
}

impl DataStateFeatures {
    pub const PER_FEATURE: usize = 6;

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn width(num_features: usize) -> usize {
        num_features * Self::PER_FEATURE
    }
}

/// Summarize one (time × features) window.
///
/// momentum = x_last − x_first; skewness = m₃/m₂^{3/2};
/// kurtosis = m₄/m₂² − 3; trend = least-squares slope against the
/// observation index.
pub fn featurize_data_state(window: &Array2<f64>) -> Result<DataStateFeatures> {
    let (n, cols) = window.dim();
    if n < 2 {
        return Err(CoreError::InsufficientData(
            "data-state features need a window of ≥ 2 rows".into(),
        ));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidData("non-finite value in window".into()));
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let t_ss: f64 = (0..n).map(|i| (i as f64 - t_mean) * (i as f64 - t_mean)).sum();
    let mut rows = Vec::with_capacity(cols);
    for c in 0..cols {
        let xs: Vec<f64> = (0..n).map(|t| window[(t, c)]).collect();
        let mean = xs.iter().sum::<f64>() / nf;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let vol = m2.sqrt();
        let momentum = xs[n - 1] - xs[0];
        let (skew, kurt) = if m2 == 0.0 {
            (0.0, 0.0)
        } else {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        };
        let trend = (0..n)
            .map(|i| (i as f64 - t_mean) * (xs[i] - mean))
            .sum::<f64>()
            / t_ss;
        rows.push([mean, vol, momentum, skew, kurt, trend]);
    }
    Ok(DataStateFeatures { rows })
}
