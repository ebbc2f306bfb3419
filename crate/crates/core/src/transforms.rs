//! Single-stock, target-invariant transformations parameterized by a
//! manipulation strength λ ∈ [0, 1]. λ = 0 is the identity for every kind;
//! all randomness comes from the caller's seeded stream.

use crate::{CoreError, Result};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The transform catalog (n = 5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Jitter,
    Scale,
    MagnitudeWarp,
    Permute,
    StlAugment,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Jitter,
        TransformKind::Scale,
        TransformKind::MagnitudeWarp,
        TransformKind::Permute,
        TransformKind::StlAugment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Jitter => "jitter",
            TransformKind::Scale => "scale",
            TransformKind::MagnitudeWarp => "magnitude_warp",
            TransformKind::Permute => "permute",
            TransformKind::StlAugment => "stl_augment",
        }
    }
}

/// Additive decomposition of one series; `trend + seasonal + residual`
/// reconstructs the input exactly by construction.
#[derive(Debug, Clone)]
pub struct StlComponents {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub period: usize,
}

/// Seasonal-trend decomposition via iterated moving-average trend removal
/// and cycle-subseries seasonal means (two inner passes).
pub fn stl_decompose(series: &[f64], period: usize) -> Result<StlComponents> {
    if period < 2 {
        return Err(CoreError::Config(format!("period must be ≥ 2, got {period}")));
    }
    if series.len() < 2 * period {
        return Err(CoreError::InsufficientData(format!(
            "series of {} is too short for period {period} (needs ≥ {})",
            series.len(),
            2 * period
        )));
    }
    let n = series.len();
    let mut seasonal = vec![0.0; n];
    let mut trend = vec![0.0; n];
    for _ in 0..2 {
        let deseason: Vec<f64> = series
            .iter()
            .zip(&seasonal)
            .map(|(x, s)| x - s)
            .collect();
        trend = centered_moving_average(&deseason, period);
        let detrended: Vec<f64> = series.iter().zip(&trend).map(|(x, t)| x - t).collect();
        let mut sums = vec![0.0; period];
        let mut counts = vec![0usize; period];
        for (i, &d) in detrended.iter().enumerate() {
            sums[i % period] += d;
            counts[i % period] += 1;
        }
        let mut cycle: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let mean = cycle.iter().sum::<f64>() / period as f64;
        for c in &mut cycle {
            *c -= mean;
        }
        for (i, s) in seasonal.iter_mut().enumerate() {
            *s = cycle[i % period];
        }
    }
    let residual: Vec<f64> = series
        .iter()
        .zip(trend.iter().zip(&seasonal))
        .map(|(x, (t, s))| x - t - s)
        .collect();
    Ok(StlComponents {
        trend,
        seasonal,
        residual,
        period,
    })
}

/// Centered moving average over a window of `period` points (rounded up to
/// odd), shrinking symmetrically at the boundaries.
fn centered_moving_average(x: &[f64], period: usize) -> Vec<f64> {
    let n = x.len();
    let half_max = period / 2;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let half = half_max.min(t).min(n - 1 - t);
        let lo = t - half;
        let hi = t + half;
        let sum: f64 = x[lo..=hi].iter().sum();
        out.push(sum / (hi - lo + 1) as f64);
    }
    out
}

/// Apply one transform at strength λ to a (time × features) window.
///
/// Deterministic given (kind, λ, window, stream). The label is never
/// touched; callers keep it alongside.
pub fn apply_transform(
    kind: TransformKind,
    lambda: f64,
    window: &Array2<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CoreError::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidData("non-finite value in window".into()));
    }
    if lambda == 0.0 {
        return Ok(window.clone());
    }
    let out = match kind {
        TransformKind::Jitter => jitter(lambda, window, rng),
        TransformKind::Scale => scale(lambda, window, rng),
        TransformKind::MagnitudeWarp => magnitude_warp(lambda, window, rng),
        TransformKind::Permute => permute(lambda, window, rng),
        TransformKind::StlAugment => stl_augment(lambda, window, rng)?,
    };
    Ok(out)
}

/// Noise std = λ · 0.05 · per-feature std of the window, so flat features
/// stay flat.
fn jitter(lambda: f64, window: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (rows, cols) = window.dim();
    let mut out = window.clone();
    for f in 0..cols {
        let col: Vec<f64> = (0..rows).map(|t| window[(t, f)]).collect();
        let std = pop_std(&col);
        let noise_std = lambda * 0.05 * std;
        for t in 0..rows {
            let z: f64 = rng.sample(StandardNormal);
            out[(t, f)] += noise_std * z;
        }
    }
    out
}

/// One multiplicative factor ~ Normal(1, (0.1λ)²) per feature.
fn scale(lambda: f64, window: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (rows, cols) = window.dim();
    let mut out = window.clone();
    for f in 0..cols {
        let z: f64 = rng.sample(StandardNormal);
        let factor = 1.0 + 0.1 * lambda * z;
        for t in 0..rows {
            out[(t, f)] *= factor;
        }
    }
    out
}

/// Smooth multiplicative curve: natural cubic spline through 4 equally
/// spaced knots with interior values ~ Normal(1, (0.2λ)²) and endpoint
/// values fixed at 1.
fn magnitude_warp(lambda: f64, window: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (rows, cols) = window.dim();
    let mut out = window.clone();
    let knots_t: Vec<f64> = (0..4).map(|k| k as f64 * (rows - 1) as f64 / 3.0).collect();
    for f in 0..cols {
        let mut knots_v = [1.0; 4];
        for v in knots_v.iter_mut().take(3).skip(1) {
            let z: f64 = rng.sample(StandardNormal);
            *v = 1.0 + 0.2 * lambda * z;
        }
        let curve = natural_cubic_eval(&knots_t, &knots_v, rows);
        for t in 0..rows {
            out[(t, f)] *= curve[t];
        }
    }
    out
}

/// Natural cubic spline through (t_k, v_k), evaluated at 0..n-1.
fn natural_cubic_eval(ts: &[f64], vs: &[f64], n: usize) -> Vec<f64> {
    let k = ts.len();
    debug_assert!(k >= 2);
    // second derivatives, natural boundary (m[0] = m[k-1] = 0)
    let mut m = vec![0.0; k];
    if k > 2 {
        let mut a = vec![0.0; k];
        let mut b = vec![0.0; k];
        let mut c = vec![0.0; k];
        let mut d = vec![0.0; k];
        for i in 1..k - 1 {
            let h0 = ts[i] - ts[i - 1];
            let h1 = ts[i + 1] - ts[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            d[i] = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
        }
        // Thomas algorithm over the interior
        for i in 2..k - 1 {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        m[k - 2] = d[k - 2] / b[k - 2];
        for i in (1..k - 2).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
        }
    }
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let x = t as f64;
        let mut seg = k - 2;
        for i in 0..k - 1 {
            if x <= ts[i + 1] {
                seg = i;
                break;
            }
        }
        let h = ts[seg + 1] - ts[seg];
        let aa = (ts[seg + 1] - x) / h;
        let bb = (x - ts[seg]) / h;
        let val = aa * vs[seg]
            + bb * vs[seg + 1]
            + ((aa * aa * aa - aa) * m[seg] + (bb * bb * bb - bb) * m[seg + 1]) * h * h / 6.0;
        out.push(val);
    }
    out
}

/// Split into 1 + round(7λ) segments (at most 8) and shuffle their order.
/// All features move together so rows stay coherent.
fn permute(lambda: f64, window: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (rows, cols) = window.dim();
    let segments = (1 + (lambda * 7.0).round() as usize).min(8).min(rows);
    if segments <= 1 {
        return window.clone();
    }
    let base = rows / segments;
    let rem = rows % segments;
    let mut bounds = Vec::with_capacity(segments);
    let mut at = 0;
    for s in 0..segments {
        let len = base + usize::from(s < rem);
        bounds.push((at, len));
        at += len;
    }
    let mut order: Vec<usize> = (0..segments).collect();
    order.shuffle(rng);
    let mut out = Array2::zeros((rows, cols));
    let mut dest = 0;
    for &s in &order {
        let (start, len) = bounds[s];
        for i in 0..len {
            for f in 0..cols {
                out[(dest + i, f)] = window[(start + i, f)];
            }
        }
        dest += len;
    }
    out
}

/// Decompose each feature, then rebuild it with residuals resampled i.i.d.
/// with replacement. λ sets the period: 5 + round(25λ), clamped to what
/// the window length allows.
fn stl_augment(lambda: f64, window: &Array2<f64>, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let (rows, cols) = window.dim();
    let max_period = rows / 2;
    if max_period < 2 {
        return Err(CoreError::InsufficientData(format!(
            "window of {rows} rows is too short for any seasonal period"
        )));
    }
    let period = (5 + (lambda * 25.0).round() as usize).clamp(2, max_period);
    let mut out = window.clone();
    for f in 0..cols {
        let col: Vec<f64> = (0..rows).map(|t| window[(t, f)]).collect();
        let parts = stl_decompose(&col, period)?;
        for t in 0..rows {
            let pick = rng.random_range(0..rows);
            out[(t, f)] = parts.trend[t] + parts.seasonal[t] + parts.residual[pick];
        }
    }
    Ok(out)
}

fn pop_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ramp_window(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(t, f)| {
            100.0 + t as f64 + 10.0 * f as f64 + ((t * (f + 1)) as f64 * 0.37).sin()
        })
    }

    #[test]
    fn lambda_zero_is_identity_for_every_kind() {
        let w = ramp_window(24, 3);
        for kind in TransformKind::ALL {
            let out = apply_transform(kind, 0.0, &w, &mut rng(1)).unwrap();
            assert_eq!(out, w, "{kind:?}");
        }
    }

    #[test]
    fn identical_seeds_reproduce_and_seeds_matter() {
        let w = ramp_window(30, 4);
        for kind in TransformKind::ALL {
            let a = apply_transform(kind, 0.8, &w, &mut rng(7)).unwrap();
            let b = apply_transform(kind, 0.8, &w, &mut rng(7)).unwrap();
            assert_eq!(a, b, "{kind:?} must be deterministic");
            let c = apply_transform(kind, 0.8, &w, &mut rng(8)).unwrap();
            assert_ne!(a, c, "{kind:?} must vary across seeds");
        }
    }

    #[test]
    fn shapes_are_preserved() {
        let w = ramp_window(16, 5);
        for kind in TransformKind::ALL {
            let out = apply_transform(kind, 0.5, &w, &mut rng(3)).unwrap();
            assert_eq!(out.dim(), w.dim(), "{kind:?}");
        }
    }

    #[test]
    fn jitter_keeps_constant_series_exact() {
        let w = Array2::from_elem((20, 2), 5.0);
        let out = apply_transform(TransformKind::Jitter, 1.0, &w, &mut rng(2)).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn scale_applies_one_factor_per_feature() {
        let w = Array2::from_elem((12, 3), 5.0);
        let out = apply_transform(TransformKind::Scale, 1.0, &w, &mut rng(4)).unwrap();
        for f in 0..3 {
            let ratio = out[(0, f)] / w[(0, f)];
            for t in 1..12 {
                assert_abs_diff_eq!(out[(t, f)] / w[(t, f)], ratio, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn permute_reorders_but_preserves_multiset() {
        let w = ramp_window(21, 2);
        let out = apply_transform(TransformKind::Permute, 1.0, &w, &mut rng(5)).unwrap();
        let mut a: Vec<f64> = w.column(0).to_vec();
        let mut b: Vec<f64> = out.column(0).to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_ne!(w, out);
    }

    #[test]
    fn non_finite_window_is_rejected() {
        let mut w = ramp_window(10, 2);
        w[(3, 1)] = f64::NAN;
        assert!(apply_transform(TransformKind::Jitter, 0.5, &w, &mut rng(1)).is_err());
    }

    #[test]
    fn stl_reconstruction_identity() {
        let xs: Vec<f64> = (0..48)
            .map(|t| 10.0 + 0.1 * t as f64 + (t as f64 * std::f64::consts::TAU / 12.0).sin())
            .collect();
        let parts = stl_decompose(&xs, 12).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let rebuilt = parts.trend[i] + parts.seasonal[i] + parts.residual[i];
            assert_abs_diff_eq!(rebuilt, x, epsilon = 1e-8 * x.abs().max(1.0));
        }
    }

    #[test]
    fn stl_sine_puts_variance_in_seasonal() {
        let period = 12;
        let xs: Vec<f64> = (0..4 * period)
            .map(|t| (t as f64 * std::f64::consts::TAU / period as f64).sin())
            .collect();
        let parts = stl_decompose(&xs, period).unwrap();
        let total: f64 = xs.iter().map(|x| x * x).sum();
        let seasonal: f64 = parts.seasonal.iter().map(|s| s * s).sum();
        assert!(
            seasonal >= 0.9 * total,
            "seasonal variance ratio {}",
            seasonal / total
        );
    }

    #[test]
    fn stl_constant_series_degenerates() {
        let xs = vec![3.0; 30];
        let parts = stl_decompose(&xs, 5).unwrap();
        for i in 0..30 {
            assert_abs_diff_eq!(parts.trend[i], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(parts.seasonal[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(parts.residual[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stl_too_short_errors() {
        let xs = vec![1.0; 9];
        assert!(stl_decompose(&xs, 5).is_err());
        assert!(stl_decompose(&xs, 1).is_err());
    }

    #[test]
    fn stl_augment_rebuilds_from_bootstrapped_residuals() {
        // λ = 0.2 → period 10; feed an exact period-10 seasonal plus trend
        let w = Array2::from_shape_fn((40, 1), |(t, _)| {
            10.0 + 0.05 * t as f64 + (t as f64 * std::f64::consts::TAU / 10.0).sin()
        });
        let col: Vec<f64> = w.column(0).to_vec();
        let parts = stl_decompose(&col, 10).unwrap();
        let out = apply_transform(TransformKind::StlAugment, 0.2, &w, &mut rng(3)).unwrap();
        // every output point is trend + seasonal + one of the residuals
        for t in 0..40 {
            let excess = out[(t, 0)] - parts.trend[t] - parts.seasonal[t];
            let hit = parts
                .residual
                .iter()
                .any(|&r| (r - excess).abs() < 1e-9);
            assert!(hit, "excess {excess} not among residuals");
        }
        // and the bootstrap average converges to the input (tiny residuals)
        let mut acc = Array2::<f64>::zeros((40, 1));
        let n = 400;
        for s in 0..n {
            let out = apply_transform(TransformKind::StlAugment, 0.2, &w, &mut rng(s)).unwrap();
            acc += &out;
        }
        acc /= n as f64;
        // pointwise slack covers moving-average boundary residuals
        let mut sum_abs = 0.0;
        for t in 0..40 {
            assert_abs_diff_eq!(acc[(t, 0)], w[(t, 0)], epsilon = 0.12);
            sum_abs += (acc[(t, 0)] - w[(t, 0)]).abs();
        }
        assert!(sum_abs / 40.0 < 0.02, "mean abs deviation {}", sum_abs / 40.0);
    }
}
