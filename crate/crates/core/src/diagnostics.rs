//! Distributional drift metrics and the rolling validation–test proximity
//! protocol.

use crate::data::{chronological_split, PanelSeries};
use crate::{CoreError, Result};

/// Population Stability Index with baseline-quantile bins and ε = 1e-6
/// smoothing of empty bins.
pub fn psi(baseline: &[f64], target: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(CoreError::Config(format!("psi bins must be ≥ 2, got {bins}")));
    }
    if baseline.is_empty() || target.is_empty() {
        return Err(CoreError::InvalidData("empty sample".into()));
    }
    let edges = quantile_edges(baseline, bins)?;
    let p = bin_proportions(baseline, &edges);
    let q = bin_proportions(target, &edges);
    const EPS: f64 = 1e-6;
    let mut total = 0.0;
    for (pi, qi) in p.iter().zip(&q) {
        let pi = pi.max(EPS);
        let qi = qi.max(EPS);
        total += (pi - qi) * (pi / qi).ln();
    }
    Ok(total)
}

/// Interior quantile cut points of the baseline. Duplicate cut points are
/// merged; a constant baseline degenerates to a single bin and errors.
fn quantile_edges(baseline: &[f64], bins: usize) -> Result<Vec<f64>> {
    let mut sorted = baseline.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Err(CoreError::InvalidData(
            "baseline is constant: quantile bins degenerate".into(),
        ));
    }
    let mut edges = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        let pos = (k as f64 / bins as f64) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let v = if lo + 1 < n {
            sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
        } else {
            sorted[lo]
        };
        edges.push(v);
    }
    edges.dedup_by(|a, b| a == b);
    if edges.is_empty() {
        return Err(CoreError::InvalidData(
            "baseline is constant: quantile bins degenerate".into(),
        ));
    }
    Ok(edges)
}

fn bin_proportions(xs: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0usize; edges.len() + 1];
    for &x in xs {
        let mut b = edges.len();
        for (i, &e) in edges.iter().enumerate() {
            if x <= e {
                b = i;
                break;
            }
        }
        counts[b] += 1;
    }
    let n = xs.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Two-sample Kolmogorov–Smirnov statistic: the sup-norm distance between
/// empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::InvalidData("empty sample".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Bandwidth rule for the RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median of pooled pairwise Euclidean distances.
    Median,
}

/// Unbiased MMD² with the kernel k(x, y) = exp(−‖x−y‖² / (2σ²)).
/// Within-set terms exclude the diagonal, so small negative values occur
/// under the null.
pub fn mmd2_rbf(u: &[Vec<f64>], v: &[Vec<f64>], bandwidth: Bandwidth) -> Result<f64> {
    if u.len() < 2 || v.len() < 2 {
        return Err(CoreError::InsufficientData(
            "mmd needs at least 2 points per sample".into(),
        ));
    }
    let dim = u[0].len();
    if u.iter().chain(v.iter()).any(|x| x.len() != dim) {
        return Err(CoreError::InvalidData("inconsistent dimensionality".into()));
    }
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => {
            if s <= 0.0 {
                return Err(CoreError::Config("bandwidth must be positive".into()));
            }
            s
        }
        Bandwidth::Median => median_distance(u, v)?,
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let kern = |x: &[f64], y: &[f64]| {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-gamma * d2).exp()
    };
    let (n, m) = (u.len() as f64, v.len() as f64);
    let mut kuu = 0.0;
    for (i, ui) in u.iter().enumerate() {
        for (j, uj) in u.iter().enumerate() {
            if i != j {
                kuu += kern(ui, uj);
            }
        }
    }
    let mut kvv = 0.0;
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            if i != j {
                kvv += kern(vi, vj);
            }
        }
    }
    // equal sizes use the paired U-statistic (cross diagonal excluded
    // too), which is exactly zero when the samples coincide
    if u.len() == v.len() {
        let mut kuv = 0.0;
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                if i != j {
                    kuv += kern(ui, vj);
                }
            }
        }
        return Ok((kuu + kvv - 2.0 * kuv) / (n * (n - 1.0)));
    }
    let mut kuv = 0.0;
    for ui in u {
        for vj in v {
            kuv += kern(ui, vj);
        }
    }
    Ok(kuu / (n * (n - 1.0)) + kvv / (m * (m - 1.0)) - 2.0 * kuv / (n * m))
}

fn median_distance(u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<f64> {
    let pooled: Vec<&Vec<f64>> = u.iter().chain(v.iter()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            let d2: f64 = pooled[i]
                .iter()
                .zip(pooled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[dists.len() / 2];
    if median <= 0.0 {
        return Err(CoreError::Numerical(
            "median pairwise distance is zero; provide a fixed bandwidth".into(),
        ));
    }
    Ok(median)
}

/// Drift metrics for one (baseline, target) pair over a feature matrix:
/// per-feature PSI and K–S averaged, MMD² on the joint vectors.
#[derive(Debug, Clone, Copy)]
pub struct DriftMetrics {
    pub psi: f64,
    pub ks: f64,
    pub mmd2: f64,
}

/// One fold of the rolling proximity protocol.
#[derive(Debug, Clone)]
pub struct DriftFold {
    pub fold: usize,
    pub train_test: DriftMetrics,
    pub valid_test: DriftMetrics,
}

/// Full report plus fold-averaged rows.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub folds: Vec<DriftFold>,
    pub avg_train_test: DriftMetrics,
    pub avg_valid_test: DriftMetrics,
}

/// Observation rows (one per timestamp) of every (stock, feature) column.
fn observation_matrix(panel: &PanelSeries) -> Vec<Vec<f64>> {
    let (t, s, f) = panel.values().dim();
    (0..t)
        .map(|ti| {
            let mut row = Vec::with_capacity(s * f);
            for si in 0..s {
                for fi in 0..f {
                    row.push(panel.get(ti, si, fi));
                }
            }
            row
        })
        .collect()
}

fn standardize(rows: &mut [Vec<f64>], means: &[f64], stds: &[f64]) {
    for row in rows {
        for (v, (m, s)) in row.iter_mut().zip(means.iter().zip(stds)) {
            *v = (*v - m) / s;
        }
    }
}

fn pair_metrics(a: &[Vec<f64>], b: &[Vec<f64>], psi_bins: usize) -> Result<DriftMetrics> {
    let dim = a[0].len();
    let mut psi_sum = 0.0;
    let mut ks_sum = 0.0;
    let mut used = 0usize;
    for d in 0..dim {
        let xa: Vec<f64> = a.iter().map(|r| r[d]).collect();
        let xb: Vec<f64> = b.iter().map(|r| r[d]).collect();
        match psi(&xa, &xb, psi_bins) {
            Ok(v) => {
                psi_sum += v;
                ks_sum += ks_statistic(&xa, &xb)?;
                used += 1;
            }
            // constant feature in this fold: skip it
            Err(CoreError::InvalidData(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(CoreError::InvalidData(
            "no usable features for drift metrics".into(),
        ));
    }
    Ok(DriftMetrics {
        psi: psi_sum / used as f64,
        ks: ks_sum / used as f64,
        mmd2: mmd2_rbf(a, b, Bandwidth::Median)?,
    })
}

/// Rolling-fold proximity: fold k splits the first `initial + k · step`
/// rows chronologically with the given ratios; metrics are computed on
/// feature rows standardized by training statistics. Folds too small to
/// split are skipped with a warning.
pub fn proximity_report(
    panel: &PanelSeries,
    folds: usize,
    ratios: [f64; 3],
    psi_bins: usize,
) -> Result<DriftReport> {
    if folds < 1 {
        return Err(CoreError::Config("need at least one fold".into()));
    }
    let t = panel.len();
    let initial = t / 2;
    let step = if folds > 1 { (t - initial) / folds } else { 0 };
    let mut out = Vec::new();
    for fold in 0..folds {
        let end = (initial + (fold + 1) * step).min(t).max(initial);
        let slice = panel.slice_time(0, end)?;
        let split = match chronological_split(&slice, ratios) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("fold {fold} skipped: {e}");
                continue;
            }
        };
        let train_rows = observation_matrix(&split.train);
        let valid_rows = observation_matrix(&split.valid);
        let test_rows = observation_matrix(&split.test);

        // per-feature standardization fitted on the training rows only
        let dim = train_rows[0].len();
        let n = train_rows.len() as f64;
        let mut means = vec![0.0; dim];
        for r in &train_rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; dim];
        for r in &train_rows {
            for ((sd, v), m) in stds.iter_mut().zip(r).zip(&means) {
                *sd += (v - m) * (v - m);
            }
        }
        for sd in &mut stds {
            *sd = (*sd / n).sqrt().max(1e-8);
        }
        let mut train_z = train_rows;
        let mut valid_z = valid_rows;
        let mut test_z = test_rows;
        standardize(&mut train_z, &means, &stds);
        standardize(&mut valid_z, &means, &stds);
        standardize(&mut test_z, &means, &stds);

        out.push(DriftFold {
            fold,
            train_test: pair_metrics(&train_z, &test_z, psi_bins)?,
            valid_test: pair_metrics(&valid_z, &test_z, psi_bins)?,
        });
    }
    if out.is_empty() {
        return Err(CoreError::InsufficientData(
            "every fold was too small to split".into(),
        ));
    }
    let avg = |pick: fn(&DriftFold) -> DriftMetrics| {
        let n = out.len() as f64;
        DriftMetrics {
            psi: out.iter().map(|f| pick(f).psi).sum::<f64>() / n,
            ks: out.iter().map(|f| pick(f).ks).sum::<f64>() / n,
            mmd2: out.iter().map(|f| pick(f).mmd2).sum::<f64>() / n,
        }
    };
    Ok(DriftReport {
        avg_train_test: avg(|f| f.train_test),
        avg_valid_test: avg(|f| f.valid_test),
        folds: out,
    })
}

/// Spearman rank correlation, used to verify metric monotonicity under a
/// parameterized shift.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(CoreError::InvalidData("need ≥ 2 paired observations".into()));
    }
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut ix: Vec<usize> = (0..v.len()).collect();
        ix.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in ix.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(CoreError::Numerical("degenerate ranks".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}
