//! Stylized-facts fidelity: return autocorrelation, absolute-return
//! autocorrelation, and the leverage correlation between returns and
//! future rolling volatility.

use crate::{CoreError, Result};

/// Autocorrelations and the leverage profile for lags 1..=max_lag, plus
/// ρ_r(0) = 1 at index 0 of the ACF vectors.
#[derive(Debug, Clone)]
pub struct StylizedFactsReport {
    /// ρ_r(k) for k = 0..=max_lag.
    pub acf_returns: Vec<f64>,
    /// ρ_|r|(k) for k = 0..=max_lag.
    pub acf_abs_returns: Vec<f64>,
    /// ρ_{r,σ}(k) for k = 1..=max_lag.
    pub leverage: Vec<f64>,
    pub vol_window: usize,
}

impl StylizedFactsReport {
    /// Mean absolute difference against a reference report, one value per
    /// statistic family (lag 0 of the ACFs is excluded: it is 1 for both).
    pub fn abs_differences(&self, reference: &StylizedFactsReport) -> Result<[f64; 3]> {
        if self.acf_returns.len() != reference.acf_returns.len()
            || self.leverage.len() != reference.leverage.len()
        {
            return Err(CoreError::InvalidData(
                "reports cover different lag ranges".into(),
            ));
        }
        let mad = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / a.len() as f64
        };
        Ok([
            mad(&self.acf_returns[1..], &reference.acf_returns[1..]),
            mad(&self.acf_abs_returns[1..], &reference.acf_abs_returns[1..]),
            mad(&self.leverage, &reference.leverage),
        ])
    }
}

/// Standard sample autocorrelation at the given lag.
pub fn autocorrelation(xs: &[f64], lag: usize) -> Result<f64> {
    if lag >= xs.len() {
        return Err(CoreError::InsufficientData(format!(
            "lag {lag} for {} observations",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    if var == 0.0 {
        return Err(CoreError::InvalidData("zero-variance series".into()));
    }
    let mut cov = 0.0;
    for t in lag..xs.len() {
        cov += (xs[t] - mean) * (xs[t - lag] - mean);
    }
    Ok(cov / var)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(CoreError::InvalidData("zero-variance series".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Compute the report on a return series. σ_t is the trailing rolling
/// standard deviation of returns over `vol_window`; the leverage entry at
/// lag k is corr(r_t, σ_{t+k}).
pub fn stylized_facts(
    returns: &[f64],
    max_lag: usize,
    vol_window: usize,
) -> Result<StylizedFactsReport> {
    if max_lag < 1 {
        return Err(CoreError::Config("max_lag must be ≥ 1".into()));
    }
    if vol_window < 2 {
        return Err(CoreError::Config("vol_window must be ≥ 2".into()));
    }
    if returns.len() < 10 * max_lag {
        return Err(CoreError::InsufficientData(format!(
            "{} returns for max_lag {max_lag} (need ≥ {})",
            returns.len(),
            10 * max_lag
        )));
    }
    let abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    let mut acf_returns = Vec::with_capacity(max_lag + 1);
    let mut acf_abs = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        acf_returns.push(autocorrelation(returns, k)?);
        acf_abs.push(autocorrelation(&abs, k)?);
    }

    // trailing rolling std, defined from index vol_window-1 onward
    let mut sigma = Vec::with_capacity(returns.len());
    for t in (vol_window - 1)..returns.len() {
        let slice = &returns[t + 1 - vol_window..=t];
        let m = slice.iter().sum::<f64>() / vol_window as f64;
        let v = slice.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / vol_window as f64;
        sigma.push(v.sqrt());
    }
    let offset = vol_window - 1; // sigma[i] is σ at time i + offset
    let mut leverage = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        // pairs (r_t, σ_{t+k}): σ index needs t + k ≥ offset
        let mut rs = Vec::new();
        let mut ss = Vec::new();
        for (t, &r) in returns.iter().enumerate() {
            if let Some(si) = (t + k).checked_sub(offset) {
                if si < sigma.len() {
                    rs.push(r);
                    ss.push(sigma[si]);
                }
            }
        }
        if rs.len() < 3 {
            return Err(CoreError::InsufficientData(format!(
                "not enough pairs for leverage lag {k}"
            )));
        }
        leverage.push(pearson(&rs, &ss)?);
    }
    Ok(StylizedFactsReport {
        acf_returns,
        acf_abs_returns: acf_abs,
        leverage,
        vol_window,
    })
}

/// Simple returns of a price series.
pub fn returns_from_prices(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(CoreError::InsufficientData("need ≥ 2 prices".into()));
    }
    prices
        .windows(2)
        .map(|w| {
            if w[0] == 0.0 {
                Err(CoreError::InvalidData("zero price".into()))
            } else {
                Ok((w[1] - w[0]) / w[0])
            }
        })
        .collect()
}
