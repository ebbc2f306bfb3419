//! Shared data preparation: load the panel, split it, fit statistics, and
//! own everything a manipulation context borrows.

use crate::config::RunConfig;
use driftforge_core::coint::{build_coint_matrix_close, CointMatrix};
use driftforge_core::curation::OhlcLayout;
use driftforge_core::data::{
    chronological_split, fit_rolling_stats, make_windows, ForecastSample, PanelSeries,
    RollingStats, SplitDataset,
};
use driftforge_core::ingest::{load_panel_csv, IngestReport};
use driftforge_core::manipulate::ManipulationContext;
use driftforge_core::policy::OperationSet;
use driftforge_core::{CoreError, Result};

pub struct PreparedData {
    pub panel: PanelSeries,
    pub report: IngestReport,
    pub split: SplitDataset,
    pub stats: RollingStats,
    pub coint: Option<CointMatrix>,
    pub ops: OperationSet,
    pub train_samples: Vec<ForecastSample>,
    pub valid_samples: Vec<ForecastSample>,
    pub test_samples: Vec<ForecastSample>,
}

impl PreparedData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        if cfg.data.paths.is_empty() {
            return Err(CoreError::Config(
                "data.paths: no input files configured".into(),
            ));
        }
        let (panel, report) = load_panel_csv(&cfg.data.paths, &cfg.csv_schema())?;
        let ops = OperationSet {
            transforms: cfg.ops.transforms.clone(),
            mixups: cfg.ops.mixups.clone(),
        };
        if !ops.mixups.is_empty() && panel.num_stocks() < 2 {
            return Err(CoreError::Config(
                "ops.mixups: mix-ups enabled but the panel has fewer than 2 stocks".into(),
            ));
        }
        let split = chronological_split(&panel, cfg.split.ratios)?;
        let stats = fit_rolling_stats(&split.train, cfg.window.stats_window)?;
        let coint = if ops.mixups.is_empty() {
            None
        } else {
            Some(build_coint_matrix_close(&split.train)?)
        };
        let train_samples = make_windows(&split.train, cfg.window.lookback)?;
        let valid_samples = make_windows(&split.valid, cfg.window.lookback)?;
        let test_samples = make_windows(&split.test, cfg.window.lookback)?;
        Ok(Self {
            panel,
            report,
            split,
            stats,
            coint,
            ops,
            train_samples,
            valid_samples,
            test_samples,
        })
    }

    pub fn ctx<'a>(&'a self, cfg: &RunConfig) -> ManipulationContext<'a> {
        ManipulationContext {
            ops: &self.ops,
            stats: &self.stats,
            coint: self.coint.as_ref(),
            train: &self.split.train,
            samples: &self.train_samples,
            layout: OhlcLayout::default(),
            binary_mix: cfg.binary_mix_config(),
            sampler: cfg.sampler_config(),
            lookback: cfg.window.lookback,
            master_seed: cfg.seed,
        }
    }
}
