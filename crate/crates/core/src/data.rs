//! Panel containers, chronological splits, forecasting windows and
//! train-fitted rolling statistics.

use crate::{CoreError, Result};
use ndarray::{Array2, Array3};

/// Conventional feature layout: the first five features are open, high,
/// low, close, volume; indicators follow.
pub const OPEN: usize = 0;
pub const HIGH: usize = 1;
pub const LOW: usize = 2;
pub const CLOSE: usize = 3;
pub const VOLUME: usize = 4;

/// One candlestick interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlineBar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl KlineBar {
    /// low ≤ min(open, close) ≤ max(open, close) ≤ high, prices positive,
    /// volume non-negative.
    pub fn is_valid(&self) -> bool {
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        self.low > 0.0
            && self.low <= body_lo
            && body_hi <= self.high
            && self.low <= self.high
            && self.volume >= 0.0
    }
}

/// Dense (timestamps × stocks × features) value block with aligned,
/// strictly increasing timestamps. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct PanelSeries {
    values: Array3<f64>,
    timestamps: Vec<i64>,
    stock_ids: Vec<String>,
    feature_ids: Vec<String>,
}

impl PanelSeries {
    pub fn new(
        values: Array3<f64>,
        timestamps: Vec<i64>,
        stock_ids: Vec<String>,
        feature_ids: Vec<String>,
    ) -> Result<Self> {
        let (t, s, f) = values.dim();
        if t != timestamps.len() || s != stock_ids.len() || f != feature_ids.len() {
            return Err(CoreError::InvalidData(format!(
                "panel shape ({t},{s},{f}) does not match axis labels ({}, {}, {})",
                timestamps.len(),
                stock_ids.len(),
                feature_ids.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidData(
                "timestamps must be strictly increasing".into(),
            ));
        }
        // calendar gaps (weekends, holidays) are tolerated with a warning;
        // the grid is uniform in trading time
        if timestamps.len() > 2 {
            let first = timestamps[1] - timestamps[0];
            if timestamps.windows(2).any(|w| w[1] - w[0] != first) {
                log::warn!("panel timestamps are not uniformly spaced");
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidData(
                "panel contains non-finite values after ingestion".into(),
            ));
        }
        Ok(Self {
            values,
            timestamps,
            stock_ids,
            feature_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_stocks(&self) -> usize {
        self.stock_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn stock_ids(&self) -> &[String] {
        &self.stock_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn get(&self, t: usize, stock: usize, feature: usize) -> f64 {
        self.values[(t, stock, feature)]
    }

    /// (time × features) window for one stock, rows `start..start+len`.
    pub fn window(&self, stock: usize, start: usize, len: usize) -> Array2<f64> {
        let mut w = Array2::zeros((len, self.num_features()));
        for i in 0..len {
            for f in 0..self.num_features() {
                w[(i, f)] = self.values[(start + i, stock, f)];
            }
        }
        w
    }

    /// One feature's full series for one stock.
    pub fn series(&self, stock: usize, feature: usize) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.values[(t, stock, feature)])
            .collect()
    }

    /// Time slice `[start, end)` as a new panel.
    pub fn slice_time(&self, start: usize, end: usize) -> Result<PanelSeries> {
        if start >= end || end > self.len() {
            return Err(CoreError::InvalidData(format!(
                "invalid time slice [{start}, {end}) of {}",
                self.len()
            )));
        }
        let values = self
            .values
            .slice(ndarray::s![start..end, .., ..])
            .to_owned();
        PanelSeries::new(
            values,
            self.timestamps[start..end].to_vec(),
            self.stock_ids.clone(),
            self.feature_ids.clone(),
        )
    }
}

/// Chronologically disjoint train/valid/test slices.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: PanelSeries,
    pub valid: PanelSeries,
    pub test: PanelSeries,
    pub ratios: [f64; 3],
}

/// Cumulative-floor boundaries: train gets floor(T·r1) rows, train+valid
/// ends at floor(T·(r1+r2)), test takes the rest.
pub fn chronological_split(panel: &PanelSeries, ratios: [f64; 3]) -> Result<SplitDataset> {
    if ratios.iter().any(|&r| r <= 0.0) {
        return Err(CoreError::Config(format!(
            "split.ratios must be positive, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::Config(format!(
            "split.ratios must sum to 1, got {ratios:?} (sum {sum})"
        )));
    }
    let t = panel.len();
    let b1 = (t as f64 * ratios[0]).floor() as usize;
    let b2 = (t as f64 * (ratios[0] + ratios[1])).floor() as usize;
    if b1 == 0 || b2 <= b1 || b2 >= t {
        return Err(CoreError::InsufficientData(format!(
            "split of {t} rows with ratios {ratios:?} leaves an empty part"
        )));
    }
    Ok(SplitDataset {
        train: panel.slice_time(0, b1)?,
        valid: panel.slice_time(b1, b2)?,
        test: panel.slice_time(b2, t)?,
        ratios,
    })
}

/// Trailing-window mean/std per (time, stock, feature), fitted on the
/// training slice only. Positions earlier than one full window use the
/// values available so far; their standard deviations are additionally
/// floored by the first full-window std, since a one- or two-point std
/// would make z-scores explode. All stds carry the
/// [`RollingStats::STD_FLOOR`] floor.
#[derive(Debug, Clone)]
pub struct RollingStats {
    pub means: Array3<f64>,
    pub stds: Array3<f64>,
    pub window: usize,
}

impl RollingStats {
    pub const STD_FLOOR: f64 = 1e-8;
}

pub fn fit_rolling_stats(train: &PanelSeries, window: usize) -> Result<RollingStats> {
    if window <= 1 {
        return Err(CoreError::Config(format!(
            "rolling window must be > 1, got {window}"
        )));
    }
    if window > train.len() {
        return Err(CoreError::InsufficientData(format!(
            "rolling window {window} exceeds training length {}",
            train.len()
        )));
    }
    let (t, s, f) = train.values().dim();
    let mut means = Array3::zeros((t, s, f));
    let mut stds = Array3::zeros((t, s, f));
    for stock in 0..s {
        for feat in 0..f {
            for end in 0..t {
                let start = end + 1 - window.min(end + 1);
                let n = (end - start + 1) as f64;
                let mut sum = 0.0;
                for i in start..=end {
                    sum += train.get(i, stock, feat);
                }
                let mean = sum / n;
                let mut sq = 0.0;
                for i in start..=end {
                    let d = train.get(i, stock, feat) - mean;
                    sq += d * d;
                }
                let std = (sq / n).sqrt().max(RollingStats::STD_FLOOR);
                means[(end, stock, feat)] = mean;
                stds[(end, stock, feat)] = std;
            }
            let first_full = stds[(window - 1, stock, feat)];
            for end in 0..window - 1 {
                let v = stds[(end, stock, feat)];
                stds[(end, stock, feat)] = v.max(first_full);
            }
        }
    }
    Ok(RollingStats {
        means,
        stds,
        window,
    })
}

/// One forecasting sample: an (L × features) window for one stock and the
/// one-step close-to-close return that follows it, computed from raw
/// closes.
#[derive(Debug, Clone)]
pub struct ForecastSample {
    pub window: Array2<f64>,
    pub target: f64,
    pub stock: usize,
    /// Index of the window's last row within the originating slice.
    pub end_index: usize,
    pub end_timestamp: i64,
}

/// All samples of a slice, ordered by (stock, end time). The sample at
/// position `i` has id `i`; provenance logs reference these ids.
pub fn make_windows(split: &PanelSeries, lookback: usize) -> Result<Vec<ForecastSample>> {
    if lookback < 1 {
        return Err(CoreError::Config("lookback must be ≥ 1".into()));
    }
    let t = split.len();
    if t < lookback + 1 {
        return Err(CoreError::InsufficientData(format!(
            "slice of {t} rows is too short for lookback {lookback} plus a one-step target"
        )));
    }
    let mut out = Vec::new();
    for stock in 0..split.num_stocks() {
        for end in (lookback - 1)..(t - 1) {
            let window = split.window(stock, end + 1 - lookback, lookback);
            let c_now = split.get(end, stock, CLOSE);
            let c_next = split.get(end + 1, stock, CLOSE);
            if c_now == 0.0 {
                return Err(CoreError::InvalidData(format!(
                    "zero close for stock {stock} at index {end}"
                )));
            }
            out.push(ForecastSample {
                window,
                target: (c_next - c_now) / c_now,
                stock,
                end_index: end,
                end_timestamp: split.timestamps()[end],
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// 5-feature OHLCV panel with flat bars around the given closes.
    pub(crate) fn panel_from_closes(closes: &[Vec<f64>]) -> PanelSeries {
        let t = closes[0].len();
        let s = closes.len();
        let mut values = Array3::zeros((t, s, 5));
        for (si, series) in closes.iter().enumerate() {
            for (ti, &c) in series.iter().enumerate() {
                values[(ti, si, OPEN)] = c;
                values[(ti, si, HIGH)] = c;
                values[(ti, si, LOW)] = c;
                values[(ti, si, CLOSE)] = c;
                values[(ti, si, VOLUME)] = 1.0;
            }
        }
        PanelSeries::new(
            values,
            (0..t as i64).map(|i| i * 86_400).collect(),
            (0..s).map(|i| format!("S{i}")).collect(),
            ["open", "high", "low", "close", "volume"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
    }
}
