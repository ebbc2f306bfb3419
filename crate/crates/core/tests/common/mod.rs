//! Shared fixtures for integration tests: synthetic OHLCV panels and a
//! ready-made manipulation context. Each test target uses a subset, so
//! dead-code analysis is silenced at item level.
#![allow(dead_code)]

use driftforge_core::coint::{build_coint_matrix_close, CointMatrix};
use driftforge_core::curation::{BinaryMixConfig, OhlcLayout};
use driftforge_core::data::{
    chronological_split, fit_rolling_stats, make_windows, ForecastSample, PanelSeries,
    RollingStats,
};
use driftforge_core::manipulate::ManipulationContext;
use driftforge_core::mixups::MixSamplerConfig;
use driftforge_core::policy::OperationSet;
use driftforge_core::seeds;
use ndarray::Array3;
use rand::Rng;

/// Random-walk OHLCV panel with valid bars.
pub fn synthetic_panel(t: usize, stocks: usize, seed: u64) -> PanelSeries {
    let mut rng = seeds::rng_from(seeds::derive(seed, "test-panel", &[0]));
    let f = 5;
    let mut values = Array3::zeros((t, stocks, f));
    for s in 0..stocks {
        let mut price: f64 = 80.0 + 15.0 * s as f64;
        for ti in 0..t {
            let step: f64 = rng.random_range(-1.0..1.0);
            let open = price;
            let close = (price + step).max(1.0);
            let hi = open.max(close) * (1.0 + rng.random::<f64>() * 0.01);
            let lo = (open.min(close) * (1.0 - rng.random::<f64>() * 0.01)).max(0.5);
            values[(ti, s, 0)] = open;
            values[(ti, s, 1)] = hi;
            values[(ti, s, 2)] = lo;
            values[(ti, s, 3)] = close;
            values[(ti, s, 4)] = 1000.0 + rng.random::<f64>() * 100.0;
            price = close;
        }
    }
    PanelSeries::new(
        values,
        (0..t as i64).map(|i| i * 86_400).collect(),
        (0..stocks).map(|i| format!("S{i}")).collect(),
        ["open", "high", "low", "close", "volume"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .unwrap()
}

/// Panel with a regime shift at the train boundary (60% mark): prices
/// mean-revert toward an anchor with one volatility and reversion speed
/// in the training range, then the anchor jumps and both parameters
/// change. Models fitted on the first regime degrade on the rest.
pub fn drifted_panel(t: usize, stocks: usize, seed: u64) -> PanelSeries {
    let mut rng = seeds::rng_from(seeds::derive(seed, "drift-panel", &[0]));
    let f = 5;
    let boundary = (t as f64 * 0.6) as usize;
    let mut values = Array3::zeros((t, stocks, f));
    for s in 0..stocks {
        let base = 100.0 + 12.0 * s as f64;
        let mut price: f64 = base;
        for ti in 0..t {
            let (anchor, kappa, vol) = if ti < boundary {
                (base, 0.08, 0.8)
            } else {
                (base * 1.10, 0.20, 1.6)
            };
            let pull = kappa * (anchor - price);
            let step: f64 = pull + vol * (rng.random::<f64>() * 2.0 - 1.0);
            let open = price;
            let close = (price + step).max(1.0);
            let hi = open.max(close) * (1.0 + rng.random::<f64>() * 0.01);
            let lo = (open.min(close) * (1.0 - rng.random::<f64>() * 0.01)).max(0.5);
            values[(ti, s, 0)] = open;
            values[(ti, s, 1)] = hi;
            values[(ti, s, 2)] = lo;
            values[(ti, s, 3)] = close;
            values[(ti, s, 4)] = 1000.0 + rng.random::<f64>() * 100.0;
            price = close;
        }
    }
    PanelSeries::new(
        values,
        (0..t as i64).map(|i| i * 86_400).collect(),
        (0..stocks).map(|i| format!("S{i}")).collect(),
        ["open", "high", "low", "close", "volume"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .unwrap()
}

/// Owns everything a [`ManipulationContext`] borrows.
pub struct Fixture {
    pub train: PanelSeries,
    pub valid_samples: Vec<ForecastSample>,
    pub test_samples: Vec<ForecastSample>,
    pub train_samples: Vec<ForecastSample>,
    pub stats: RollingStats,
    pub coint: Option<CointMatrix>,
    pub ops: OperationSet,
    pub lookback: usize,
}

impl Fixture {
    pub fn new(panel: &PanelSeries, lookback: usize) -> Self {
        let split = chronological_split(panel, [0.6, 0.2, 0.2]).unwrap();
        let stats = fit_rolling_stats(&split.train, lookback).unwrap();
        let coint = if split.train.num_stocks() >= 2 {
            Some(build_coint_matrix_close(&split.train).unwrap())
        } else {
            None
        };
        let train_samples = make_windows(&split.train, lookback).unwrap();
        let valid_samples = make_windows(&split.valid, lookback).unwrap();
        let test_samples = make_windows(&split.test, lookback).unwrap();
        Fixture {
            train: split.train,
            valid_samples,
            test_samples,
            train_samples,
            stats,
            coint,
            ops: OperationSet::default(),
            lookback,
        }
    }

    pub fn ctx(&self, master_seed: u64) -> ManipulationContext<'_> {
        ManipulationContext {
            ops: &self.ops,
            stats: &self.stats,
            coint: self.coint.as_ref(),
            train: &self.train,
            samples: &self.train_samples,
            layout: OhlcLayout::default(),
            binary_mix: BinaryMixConfig::default(),
            sampler: MixSamplerConfig::default(),
            lookback: self.lookback,
            master_seed,
        }
    }
}
