//! Target-variant multi-stock mix-ups and cointegration-guided partner
//! sampling. Mixes operate in normalized space; labels blend with the
//! same ratio as the features.

use crate::coint::CointMatrix;
use crate::{CoreError, Result};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// The mix-up catalog (m = 4). `TailoredMix` is the frequency-domain blend
/// that combines significant target frequencies by magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixKind {
    CutMix,
    LinearMix,
    AmplitudeMix,
    TailoredMix,
}

impl MixKind {
    pub const ALL: [MixKind; 4] = [
        MixKind::CutMix,
        MixKind::LinearMix,
        MixKind::AmplitudeMix,
        MixKind::TailoredMix,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MixKind::CutMix => "cut_mix",
            MixKind::LinearMix => "linear_mix",
            MixKind::AmplitudeMix => "amplitude_mix",
            MixKind::TailoredMix => "tailored_mix",
        }
    }
}

/// Partner-sampling configuration: how many of the best-scoring candidates
/// stay in the softmax.
#[derive(Debug, Clone, Copy)]
pub struct MixSamplerConfig {
    pub candidates: usize,
}

impl Default for MixSamplerConfig {
    fn default() -> Self {
        Self { candidates: 5 }
    }
}

/// Exponent-skewed candidate scores: λ ≤ 0.5 favors strong cointegration
/// (small p-values), λ > 0.5 favors weak cointegration.
fn candidate_scores(lambda: f64, pvals: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let beta = if lambda <= 0.5 { 1.0 - lambda } else { lambda };
    pvals
        .iter()
        .map(|&(j, p)| {
            let s = if lambda <= 0.5 {
                -p.powf(beta)
            } else {
                p.powf(1.0 / beta)
            };
            (j, s)
        })
        .collect()
}

/// Top-k candidates and their softmax probabilities — the analytic
/// distribution that [`sample_mix_target`] draws from.
pub fn target_distribution(
    source: usize,
    lambda: f64,
    coint: &CointMatrix,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CoreError::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    let cands = coint.candidates(source);
    if cands.is_empty() {
        return Err(CoreError::InvalidData(format!(
            "no valid cointegration candidates for stock {source}"
        )));
    }
    let mut scored = candidate_scores(lambda, &cands);
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k.max(1).min(scored.len()));
    let max = scored.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scored.iter().map(|&(_, s)| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(scored
        .iter()
        .zip(&weights)
        .map(|(&(j, _), &w)| (j, w / total))
        .collect())
}

/// Draw a mix partner for `source`, never returning the source itself.
pub fn sample_mix_target(
    source: usize,
    lambda: f64,
    coint: &CointMatrix,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let dist = target_distribution(source, lambda, coint, k)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(j, p) in &dist {
        acc += p;
        if u < acc {
            return Ok(j);
        }
    }
    Ok(dist.last().expect("non-empty distribution").0)
}

/// Apply one mix-up at strength λ to a (window, label) pair. Windows are
/// expected in normalized space and must share a shape.
pub fn apply_mixup(
    kind: MixKind,
    lambda: f64,
    src: (&Array2<f64>, f64),
    tgt: (&Array2<f64>, f64),
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, f64)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CoreError::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    let (xs, ys) = src;
    let (xt, yt) = tgt;
    if xs.dim() != xt.dim() {
        return Err(CoreError::InvalidData(format!(
            "mix-up shape mismatch {:?} vs {:?}",
            xs.dim(),
            xt.dim()
        )));
    }
    match kind {
        MixKind::CutMix => cut_mix(lambda, xs, ys, xt, yt, rng),
        MixKind::LinearMix => {
            let window = crate::curation::blend(xt, xs, lambda);
            Ok((window, (1.0 - lambda) * ys + lambda * yt))
        }
        MixKind::AmplitudeMix => amplitude_mix(lambda, xs, ys, xt, yt),
        MixKind::TailoredMix => tailored_mix(lambda, xs, ys, xt, yt),
    }
}

/// One contiguous patch of round(λ·L) timesteps, spanning all features;
/// the label weight is the replaced fraction.
fn cut_mix(
    lambda: f64,
    xs: &Array2<f64>,
    ys: f64,
    xt: &Array2<f64>,
    yt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, f64)> {
    let (rows, cols) = xs.dim();
    let len = (lambda * rows as f64).round() as usize;
    if len == 0 {
        return Ok((xs.clone(), ys));
    }
    let len = len.min(rows);
    let start = if len == rows {
        0
    } else {
        rng.random_range(0..=(rows - len))
    };
    let mut out = xs.clone();
    for r in start..start + len {
        for c in 0..cols {
            out[(r, c)] = xt[(r, c)];
        }
    }
    let w = len as f64 / rows as f64;
    Ok((out, (1.0 - w) * ys + w * yt))
}

fn fft_forward(planner: &mut FftPlanner<f64>, col: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = col.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(col.len()).process(&mut buf);
    buf
}

fn fft_inverse_real(
    planner: &mut FftPlanner<f64>,
    mut spec: Vec<Complex<f64>>,
) -> Result<Vec<f64>> {
    let n = spec.len();
    planner.plan_fft_inverse(n).process(&mut spec);
    let scale = 1.0 / n as f64;
    let max_im = spec.iter().map(|c| (c.im * scale).abs()).fold(0.0, f64::max);
    let max_re = spec.iter().map(|c| (c.re * scale).abs()).fold(0.0, f64::max);
    if max_im > 1e-9 * max_re.max(1.0) {
        return Err(CoreError::Numerical(format!(
            "imaginary residue {max_im} after inverse transform"
        )));
    }
    Ok(spec.into_iter().map(|c| c.re * scale).collect())
}

/// Blend spectral magnitudes per feature, keeping the source phase.
fn amplitude_mix(
    lambda: f64,
    xs: &Array2<f64>,
    ys: f64,
    xt: &Array2<f64>,
    yt: f64,
) -> Result<(Array2<f64>, f64)> {
    let (rows, cols) = xs.dim();
    let mut planner = FftPlanner::new();
    let mut out = Array2::zeros((rows, cols));
    for c in 0..cols {
        let src_col: Vec<f64> = xs.column(c).to_vec();
        let tgt_col: Vec<f64> = xt.column(c).to_vec();
        let a = fft_forward(&mut planner, &src_col);
        let b = fft_forward(&mut planner, &tgt_col);
        let mixed: Vec<Complex<f64>> = a
            .iter()
            .zip(&b)
            .map(|(sa, sb)| {
                let mag = (1.0 - lambda) * sa.norm() + lambda * sb.norm();
                Complex::from_polar(mag, sa.arg())
            })
            .collect();
        let back = fft_inverse_real(&mut planner, mixed)?;
        for (r, v) in back.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok((out, (1.0 - lambda) * ys + lambda * yt))
}

/// At the target's top-q frequency bins, blend magnitude and phase (phase
/// along the shorter arc); elsewhere keep the source spectrum untouched.
fn tailored_mix(
    lambda: f64,
    xs: &Array2<f64>,
    ys: f64,
    xt: &Array2<f64>,
    yt: f64,
) -> Result<(Array2<f64>, f64)> {
    let (rows, cols) = xs.dim();
    let q = ((lambda * rows as f64 / 4.0).round() as usize).max(1);
    let half = rows / 2;
    let mut planner = FftPlanner::new();
    let mut out = Array2::zeros((rows, cols));
    for c in 0..cols {
        let src_col: Vec<f64> = xs.column(c).to_vec();
        let tgt_col: Vec<f64> = xt.column(c).to_vec();
        let mut spec = fft_forward(&mut planner, &src_col);
        let tgt_spec = fft_forward(&mut planner, &tgt_col);
        // rank non-mirrored bins by target magnitude
        let mut bins: Vec<usize> = (0..=half.min(rows - 1)).collect();
        bins.sort_by(|&i, &j| tgt_spec[j].norm().partial_cmp(&tgt_spec[i].norm()).unwrap());
        for &bin in bins.iter().take(q.min(bins.len())) {
            let sa = spec[bin];
            let sb = tgt_spec[bin];
            let mirror = (rows - bin) % rows;
            if mirror == bin {
                // DC and Nyquist are self-conjugate: stay on the real axis
                spec[bin] = Complex::new((1.0 - lambda) * sa.re + lambda * sb.re, 0.0);
                continue;
            }
            let mag = (1.0 - lambda) * sa.norm() + lambda * sb.norm();
            let mut dphi = sb.arg() - sa.arg();
            while dphi > std::f64::consts::PI {
                dphi -= std::f64::consts::TAU;
            }
            while dphi < -std::f64::consts::PI {
                dphi += std::f64::consts::TAU;
            }
            let phase = sa.arg() + lambda * dphi;
            let mixed = Complex::from_polar(mag, phase);
            spec[bin] = mixed;
            spec[mirror] = mixed.conj();
        }
        let back = fft_inverse_real(&mut planner, spec)?;
        for (r, v) in back.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok((out, (1.0 - lambda) * ys + lambda * yt))
}
