//! Residual-based two-step cointegration testing and the pairwise p-value
//! matrix that guides mix-up target sampling.
//!
//! Step one regresses `a` on `b` with an intercept; step two runs an
//! augmented Dickey-Fuller regression (no deterministic terms) on the
//! residuals with lag order floor(12·(T/100)^0.25). The t-statistic maps
//! to a p-value through the MacKinnon response-surface approximation for
//! two-variable cointegration with a constant.

use crate::data::{PanelSeries, CLOSE};
use crate::{CoreError, Result};
use std::io::Write;
use std::path::Path;

/// Minimum sample length for the test.
pub const MIN_LEN: usize = 50;

/// Engle-Granger p-value for the null of no cointegration between two
/// price series. Small values favor cointegration.
pub fn engle_granger_pvalue(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::InvalidData(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < MIN_LEN {
        return Err(CoreError::InsufficientData(format!(
            "need ≥ {MIN_LEN} observations, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidData("non-finite observation".into()));
    }
    if is_constant(a) || is_constant(b) {
        return Err(CoreError::InvalidData(
            "zero-variance series cannot be tested for cointegration".into(),
        ));
    }
    let t = a.len();
    // first stage: a = c + beta * b + resid
    let x: Vec<Vec<f64>> = b.iter().map(|&bv| vec![1.0, bv]).collect();
    let fit = ols(&x, a)?;
    let resid: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&av, &bv)| av - fit.coefs[0] - fit.coefs[1] * bv)
        .collect();
    let lags = adf_lag_order(t);
    let t_stat = adf_tstat(&resid, lags)?;
    Ok(mackinnon_pvalue(t_stat))
}

/// Schwert rule: floor(12 · (T/100)^0.25).
pub fn adf_lag_order(t: usize) -> usize {
    (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

/// t-statistic of the level coefficient in
/// Δy_t = γ·y_{t-1} + Σ_{i=1..p} δ_i·Δy_{t-i} + ε_t (no deterministic
/// terms; the first stage already removed the mean).
fn adf_tstat(y: &[f64], lags: usize) -> Result<f64> {
    let n = y.len();
    if n < lags + 3 {
        return Err(CoreError::InsufficientData(format!(
            "{n} residuals cannot support {lags} lags"
        )));
    }
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let k = 1 + lags;
    let rows = dy.len() - lags;
    let mut x = Vec::with_capacity(rows);
    let mut target = Vec::with_capacity(rows);
    for i in lags..dy.len() {
        let mut row = Vec::with_capacity(k);
        row.push(y[i]); // y_{t-1} for Δy_t with t = i+1
        for l in 1..=lags {
            row.push(dy[i - l]);
        }
        x.push(row);
        target.push(dy[i]);
    }
    let fit = ols(&x, &target)?;
    let dof = rows as f64 - k as f64;
    if dof <= 0.0 {
        return Err(CoreError::InsufficientData(
            "no degrees of freedom in ADF regression".into(),
        ));
    }
    let s2 = fit.rss / dof;
    let se = (s2 * fit.xtx_inv_diag[0]).sqrt();
    if se == 0.0 || !se.is_finite() {
        return Err(CoreError::Numerical("degenerate ADF regression".into()));
    }
    Ok(fit.coefs[0] / se)
}

struct OlsFit {
    coefs: Vec<f64>,
    rss: f64,
    xtx_inv_diag: Vec<f64>,
}

/// Ordinary least squares via the normal equations with Gauss-Jordan
/// inversion; fine for the handful of regressors used here.
fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let rows = x.len();
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..k {
            xty[i] += row[i] * yi;
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert(&xtx)
        .ok_or_else(|| CoreError::Numerical("singular design matrix in OLS".into()))?;
    let mut coefs = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            coefs[i] += inv[i][j] * xty[j];
        }
    }
    let mut rss = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let pred: f64 = row.iter().zip(&coefs).map(|(a, b)| a * b).sum();
        let e = yi - pred;
        rss += e * e;
    }
    let _ = rows;
    Ok(OlsFit {
        coefs,
        rss,
        xtx_inv_diag: (0..k).map(|i| inv[i][i]).collect(),
    })
}

fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

// MacKinnon (1994/2010) response-surface coefficients for the residual
// test with a constant in the cointegrating regression, two variables.
const TAU_MAX: f64 = 0.92;
const TAU_MIN: f64 = -18.86;
const TAU_STAR: f64 = -2.62;
const TAU_SMALL_P: [f64; 3] = [2.92, 1.5012, 3.9796e-2];
const TAU_LARGE_P: [f64; 4] = [2.1945, 6.4695e-1, -2.9198e-1, -4.2377e-2];

/// Approximate asymptotic p-value for the Engle-Granger t-statistic.
pub fn mackinnon_pvalue(t_stat: f64) -> f64 {
    if t_stat > TAU_MAX {
        return 1.0;
    }
    if t_stat < TAU_MIN {
        return 0.0;
    }
    let z = if t_stat <= TAU_STAR {
        polyval(&TAU_SMALL_P, t_stat)
    } else {
        polyval(&TAU_LARGE_P, t_stat)
    };
    norm_cdf(z)
}

/// Horner evaluation with coefficients ordered low to high.
fn polyval(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Standard normal CDF, Hart-style rational approximation (double
/// precision over the whole range).
pub fn norm_cdf(x: f64) -> f64 {
    let xabs = x.abs();
    let cum = if xabs > 37.0 {
        0.0
    } else {
        let e = (-xabs * xabs / 2.0).exp();
        if xabs < 7.071_067_811_865_475 {
            let mut num = 3.52624965998911e-2 * xabs + 0.700383064443688;
            num = num * xabs + 6.37396220353165;
            num = num * xabs + 33.912866078383;
            num = num * xabs + 112.079291497871;
            num = num * xabs + 221.213596169931;
            num = num * xabs + 220.206867912376;
            let mut den = 8.83883476483184e-2 * xabs + 1.75566716318264;
            den = den * xabs + 16.064177579207;
            den = den * xabs + 86.7807322029461;
            den = den * xabs + 296.564248779674;
            den = den * xabs + 637.333633378831;
            den = den * xabs + 793.826512519948;
            den = den * xabs + 440.413735824752;
            e * num / den
        } else {
            let mut build = xabs + 0.65;
            build = xabs + 4.0 / build;
            build = xabs + 3.0 / build;
            build = xabs + 2.0 / build;
            build = xabs + 1.0 / build;
            e / build / 2.506628274631
        }
    };
    if x > 0.0 {
        1.0 - cum
    } else {
        cum
    }
}

/// Pairwise Engle-Granger p-values over close prices of the training
/// slice. The diagonal and failed pairs are invalid (NaN); a stock whose
/// row is entirely invalid surfaces as an error at sampling time.
#[derive(Debug, Clone)]
pub struct CointMatrix {
    pvalues: Vec<f64>,
    stock_ids: Vec<String>,
}

impl CointMatrix {
    pub fn from_parts(pvalues: Vec<f64>, stock_ids: Vec<String>) -> Result<Self> {
        if pvalues.len() != stock_ids.len() * stock_ids.len() {
            return Err(CoreError::InvalidData("p-value matrix is not square".into()));
        }
        Ok(Self { pvalues, stock_ids })
    }

    pub fn num_stocks(&self) -> usize {
        self.stock_ids.len()
    }

    pub fn stock_ids(&self) -> &[String] {
        &self.stock_ids
    }

    /// `None` for the diagonal and failed pairs.
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        let v = self.pvalues[a * self.num_stocks() + b];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Valid mix-up candidates for source `a`: (index, p-value).
    pub fn candidates(&self, a: usize) -> Vec<(usize, f64)> {
        (0..self.num_stocks())
            .filter(|&j| j != a)
            .filter_map(|j| self.get(a, j).map(|p| (j, p)))
            .collect()
    }

    /// Persist as CSV with a stock-id header for inspection.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "stock,{}", self.stock_ids.join(","))?;
        let n = self.num_stocks();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| match self.get(i, j) {
                    Some(p) => format!("{p:.6}"),
                    None => String::new(),
                })
                .collect();
            writeln!(f, "{},{}", self.stock_ids[i], row.join(","))?;
        }
        Ok(())
    }
}

/// Build the pairwise matrix on one price feature (close by default).
/// Per-pair failures become invalid entries rather than hard errors.
pub fn build_coint_matrix(train: &PanelSeries, price_feature: usize) -> Result<CointMatrix> {
    let s = train.num_stocks();
    if s < 2 {
        return Err(CoreError::Config(
            "mix-ups need at least 2 stocks in the panel".into(),
        ));
    }
    let series: Vec<Vec<f64>> = (0..s).map(|i| train.series(i, price_feature)).collect();
    let mut pvalues = vec![f64::NAN; s * s];
    for a in 0..s {
        for b in 0..s {
            if a == b {
                continue;
            }
            if let Ok(p) = engle_granger_pvalue(&series[a], &series[b]) {
                pvalues[a * s + b] = p;
            }
        }
    }
    CointMatrix::from_parts(pvalues, train.stock_ids().to_vec())
}

/// Convenience wrapper defaulting to the close column.
pub fn build_coint_matrix_close(train: &PanelSeries) -> Result<CointMatrix> {
    build_coint_matrix(train, CLOSE)
}
