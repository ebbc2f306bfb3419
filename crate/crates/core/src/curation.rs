//! Financial-integrity curation: K-line repair, rolling normalization and
//! its exact inverse, and the mutual-information compensation blend.

use crate::data::{RollingStats, CLOSE, HIGH, LOW, OPEN};
use crate::{CoreError, Result};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Column positions of the four price features inside a window.
#[derive(Debug, Clone, Copy)]
pub struct OhlcLayout {
    pub open: usize,
    pub high: usize,
    pub low: usize,
    pub close: usize,
}

impl Default for OhlcLayout {
    fn default() -> Self {
        Self {
            open: OPEN,
            high: HIGH,
            low: LOW,
            close: CLOSE,
        }
    }
}

/// Per row, set high to the max and low to the min of {O, H, L, C},
/// leaving open and close untouched. Output rows satisfy the K-line
/// constraint by construction.
pub fn enforce_kline_consistency(
    window: &Array2<f64>,
    layout: OhlcLayout,
) -> Result<Array2<f64>> {
    let (rows, cols) = window.dim();
    let max_col = layout.open.max(layout.high).max(layout.low).max(layout.close);
    if max_col >= cols {
        return Err(CoreError::Config(format!(
            "OHLC layout references column {max_col} in a {cols}-feature window"
        )));
    }
    let mut out = window.clone();
    for r in 0..rows {
        let o = window[(r, layout.open)];
        let h = window[(r, layout.high)];
        let l = window[(r, layout.low)];
        let c = window[(r, layout.close)];
        if !(o.is_finite() && h.is_finite() && l.is_finite() && c.is_finite()) {
            return Err(CoreError::InvalidData(format!(
                "non-finite price in row {r}"
            )));
        }
        out[(r, layout.high)] = o.max(h).max(l).max(c);
        out[(r, layout.low)] = o.min(h).min(l).min(c);
    }
    Ok(out)
}

/// Rolling mean/std for one window's positions: (L × features) views for a
/// given stock, ending at `end_index` inclusive.
#[derive(Debug, Clone)]
pub struct WindowStats {
    pub means: Array2<f64>,
    pub stds: Array2<f64>,
}

impl WindowStats {
    /// Slice per-position statistics out of train-fitted rolling stats.
    pub fn for_window(
        stats: &RollingStats,
        stock: usize,
        end_index: usize,
        lookback: usize,
    ) -> Result<WindowStats> {
        let (t, s, f) = stats.means.dim();
        if stock >= s {
            return Err(CoreError::InvalidData(format!("stock {stock} out of range")));
        }
        if end_index >= t || end_index + 1 < lookback {
            return Err(CoreError::InvalidData(format!(
                "rolling stats do not cover window ending at {end_index} with lookback {lookback}"
            )));
        }
        let start = end_index + 1 - lookback;
        let mut means = Array2::zeros((lookback, f));
        let mut stds = Array2::zeros((lookback, f));
        for i in 0..lookback {
            for j in 0..f {
                means[(i, j)] = stats.means[(start + i, stock, j)];
                stds[(i, j)] = stats.stds[(start + i, stock, j)];
            }
        }
        Ok(WindowStats { means, stds })
    }
}

/// z = (x − mean) / std per (time, feature); std already carries the
/// ε floor from fitting.
pub fn rolling_normalize(window: &Array2<f64>, stats: &WindowStats) -> Result<Array2<f64>> {
    if window.dim() != stats.means.dim() {
        return Err(CoreError::InvalidData(format!(
            "stats shape {:?} does not cover window {:?}",
            stats.means.dim(),
            window.dim()
        )));
    }
    let mut out = window.clone();
    for ((r, c), v) in out.indexed_iter_mut() {
        *v = (*v - stats.means[(r, c)]) / stats.stds[(r, c)];
    }
    Ok(out)
}

/// Exact inverse of [`rolling_normalize`].
pub fn rolling_denormalize(window: &Array2<f64>, stats: &WindowStats) -> Result<Array2<f64>> {
    if window.dim() != stats.means.dim() {
        return Err(CoreError::InvalidData(format!(
            "stats shape {:?} does not cover window {:?}",
            stats.means.dim(),
            window.dim()
        )));
    }
    let mut out = window.clone();
    for ((r, c), v) in out.indexed_iter_mut() {
        *v = *v * stats.stds[(r, c)] + stats.means[(r, c)];
    }
    Ok(out)
}

/// Plug-in histogram estimate of mutual information, in nats.
#[derive(Debug, Clone, Copy)]
pub struct MiEstimate {
    pub mi_xy: f64,
    pub mi_xx: f64,
    pub feature: usize,
}

/// Joint bins×bins histogram MI with equal-width bins over each variable's
/// own range, clamped at zero. `mi_xx` of a constant series is undefined,
/// hence the error.
pub fn estimate_mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(CoreError::Config(format!("bins must be ≥ 2, got {bins}")));
    }
    if x.len() != y.len() {
        return Err(CoreError::InvalidData("length mismatch".into()));
    }
    if x.len() < bins {
        return Err(CoreError::InsufficientData(format!(
            "{} observations for {bins} bins",
            x.len()
        )));
    }
    let bx = Binner::new(x)?;
    let by = Binner::new(y)?;
    let n = x.len() as f64;
    let mut joint = vec![0.0f64; bins * bins];
    let mut px = vec![0.0f64; bins];
    let mut py = vec![0.0f64; bins];
    for (&xv, &yv) in x.iter().zip(y) {
        let i = bx.bin(xv, bins);
        let j = by.bin(yv, bins);
        joint[i * bins + j] += 1.0;
        px[i] += 1.0;
        py[j] += 1.0;
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let pij = joint[i * bins + j] / n;
            if pij > 0.0 {
                mi += pij * (pij / (px[i] / n * py[j] / n)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

struct Binner {
    lo: f64,
    width: f64,
}

impl Binner {
    fn new(xs: &[f64]) -> Result<Self> {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(CoreError::InvalidData("non-finite observation".into()));
        }
        if hi == lo {
            return Err(CoreError::InvalidData(
                "constant series: mutual-information baseline undefined".into(),
            ));
        }
        Ok(Self { lo, width: hi - lo })
    }

    fn bin(&self, v: f64, bins: usize) -> usize {
        (((v - self.lo) / self.width) * bins as f64).floor().min(bins as f64 - 1.0) as usize
    }
}

/// Interpolation compensation configuration.
#[derive(Debug, Clone, Copy)]
pub struct BinaryMixConfig {
    /// Maximum compensation weight toward the original sample.
    pub b_max: f64,
    /// Histogram bins for the MI estimate.
    pub bins: usize,
}

impl Default for BinaryMixConfig {
    fn default() -> Self {
        Self { b_max: 0.5, bins: 16 }
    }
}

impl BinaryMixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.b_max) {
            return Err(CoreError::Config(format!(
                "binary_mix.b_max {} outside [0, 1]",
                self.b_max
            )));
        }
        if self.bins < 2 {
            return Err(CoreError::Config("binary_mix.bins must be ≥ 2".into()));
        }
        Ok(())
    }
}

/// Outcome of the compensation blend: the window plus the weight that was
/// applied (recorded by provenance and reused for label blending).
#[derive(Debug, Clone)]
pub struct BinaryMixOutcome {
    pub window: Array2<f64>,
    pub b_mix: f64,
    pub feature: usize,
}

/// Blend the augmented window `y` back toward the original `x` in
/// proportion to how dissimilar they are on one randomly chosen feature:
/// b_mix = b_max − (MI_xy / MI_xx) · b_max, output = b_mix·x + (1−b_mix)·y.
pub fn binary_mix(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cfg: &BinaryMixConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BinaryMixOutcome> {
    cfg.validate()?;
    if x.dim() != y.dim() {
        return Err(CoreError::InvalidData(format!(
            "shape mismatch {:?} vs {:?}",
            x.dim(),
            y.dim()
        )));
    }
    let cols = x.ncols();
    let usable: Vec<usize> = (0..cols)
        .filter(|&f| {
            let col = x.column(f);
            col.iter().any(|&v| v != col[0])
        })
        .collect();
    if usable.is_empty() {
        return Err(CoreError::InvalidData(
            "all features constant; cannot estimate similarity".into(),
        ));
    }
    let feature = usable[rng.random_range(0..usable.len())];
    let xf: Vec<f64> = x.column(feature).to_vec();
    let yf: Vec<f64> = y.column(feature).to_vec();
    // short windows cannot fill the full histogram
    let bins = cfg.bins.min(xf.len()).max(2);
    let mi_xx = estimate_mutual_information(&xf, &xf, bins)?;
    let mi_xy = estimate_mutual_information(&xf, &yf, bins)?;
    // estimator noise can push mi_xy past the baseline; clamp before the ratio
    let ratio = (mi_xy.min(mi_xx)) / mi_xx;
    let b_mix = (cfg.b_max - ratio * cfg.b_max).clamp(0.0, cfg.b_max);
    let window = blend(x, y, b_mix);
    Ok(BinaryMixOutcome {
        window,
        b_mix,
        feature,
    })
}

/// b·x + (1−b)·y elementwise.
pub fn blend(x: &Array2<f64>, y: &Array2<f64>, b: f64) -> Array2<f64> {
    let mut out = y.clone();
    out.zip_mut_with(x, |yo, &xo| *yo = b * xo + (1.0 - b) * *yo);
    out
}
