//! The joint training scheme: schedule α, plan (p, λ), manipulate the
//! batch, update the task model, and every `freq` steps update the
//! planner on validation feedback.

use crate::data::ForecastSample;
use crate::manipulate::{manipulate, ManipulationContext};
use crate::models::{evaluate, train_batch, BatchData, LossConfig, TaskModel};
use crate::planner::{aggregate_state, planner_update, Planner, PlannerUpdateConfig};
use crate::policy::ManipulationPolicy;
use crate::provenance::ProvenanceWriter;
use crate::scheduler::{schedule_alpha, SchedulerState};
use crate::{seeds, CoreError, Result};
use diffcore::Optimizer;
use rand::seq::SliceRandom;
use std::io::Write;
use std::path::Path;

/// How the manipulation policy is produced each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Planner-emitted (p, λ), scheduler-driven α.
    Planned,
    /// Uniform p and a fixed λ, scheduler-driven α.
    FixedUniform,
    /// No manipulation at all (α = 0).
    NoAugment,
}

/// Joint-loop hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub max_epochs: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma_risk: f64,
    /// Planner update cadence in steps.
    pub freq: u64,
    /// Outer learning rate β.
    pub planner_lr: f64,
    pub planner_start_epoch: u64,
    pub patience: u64,
    /// Minimum validation improvement δ.
    pub improvement_delta: f64,
    pub tau: f64,
    pub master_seed: u64,
    pub policy_mode: PolicyMode,
    pub fixed_lambda: f64,
    pub probe_batch: usize,
    pub planner_train_batch: usize,
    pub planner_val_batch: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            gamma_risk: 0.05,
            freq: 10,
            planner_lr: 1e-3,
            planner_start_epoch: 5,
            patience: 5,
            improvement_delta: 1e-5,
            tau: 10.0,
            master_seed: 0,
            policy_mode: PolicyMode::Planned,
            fixed_lambda: 0.5,
            probe_batch: 32,
            planner_train_batch: 16,
            planner_val_batch: 64,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.freq < 1 {
            return Err(CoreError::Config("trainer.freq must be ≥ 1".into()));
        }
        if self.batch_size < 1 {
            return Err(CoreError::Config("trainer.batch_size must be ≥ 1".into()));
        }
        if self.tau <= 0.0 {
            return Err(CoreError::Config("scheduler.tau must be > 0".into()));
        }
        if self.max_epochs < 1 {
            return Err(CoreError::Config("trainer.max_epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One epoch's history row.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: u64,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Population std of the per-sample validation losses.
    pub valid_std: f64,
    pub alpha: f64,
    pub c_es: u64,
}

/// Why the loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    Diverged,
}

/// Loop outcome: per-epoch history plus the stop cause. Parameters live in
/// the model/planner the caller passed in.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub stop: StopReason,
    pub best_valid_loss: f64,
}

/// Write history as CSV (epoch, train_loss, valid_loss, alpha, c_es).
pub fn write_history_csv(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_loss,valid_loss,valid_std,alpha,c_es")?;
    for row in history {
        writeln!(
            f,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            row.epoch, row.train_loss, row.valid_loss, row.valid_std, row.alpha, row.c_es
        )?;
    }
    Ok(())
}

/// Run the joint loop. The planner is optional outside `Planned` mode.
/// Provenance, when given, receives one record per manipulation step.
pub fn joint_train(
    cfg: &TrainerConfig,
    ctx: &ManipulationContext,
    valid_samples: &[ForecastSample],
    model: &mut dyn TaskModel,
    planner: Option<&mut Planner>,
    mut provenance: Option<&mut ProvenanceWriter>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ctx.validate()?;
    if valid_samples.is_empty() {
        return Err(CoreError::InvalidData("empty validation set".into()));
    }
    if ctx.samples.is_empty() {
        return Err(CoreError::InvalidData("empty training set".into()));
    }
    let mut planner = planner;
    if cfg.policy_mode == PolicyMode::Planned && planner.is_none() {
        return Err(CoreError::Config(
            "planned policy mode requires a planner".into(),
        ));
    }

    let loss_cfg = LossConfig {
        gamma_risk: cfg.gamma_risk,
    };
    let mut optimizer = Optimizer::adam(cfg.learning_rate);
    let mut scheduler = SchedulerState::new(cfg.tau);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut global_step: u64 = 0;
    let mut divergent_epochs = 0u32;
    let mut stop = StopReason::MaxEpochs;

    let all_ids: Vec<usize> = (0..ctx.samples.len()).collect();
    for epoch in 0..cfg.max_epochs {
        scheduler.epoch = epoch;
        let alpha = match cfg.policy_mode {
            PolicyMode::NoAugment => {
                // keep counters moving for parity with scheduled runs
                let _ = schedule_alpha(&mut scheduler)?;
                0.0
            }
            _ => schedule_alpha(&mut scheduler)?,
        };

        // probe state + per-epoch policy
        let mut probe_rng = seeds::rng_from(seeds::derive(cfg.master_seed, "probe", &[epoch]));
        let policy = match cfg.policy_mode {
            PolicyMode::Planned => {
                let probe: Vec<ForecastSample> = rand::seq::index::sample(
                    &mut probe_rng,
                    ctx.samples.len(),
                    cfg.probe_batch.min(ctx.samples.len()),
                )
                .iter()
                .map(|i| ctx.samples[i].clone())
                .collect();
                let state = aggregate_state(&*model, &probe)?;
                let mut pol = planner.as_ref().expect("checked above").policy(&state, alpha)?;
                pol.alpha = alpha;
                pol
            }
            PolicyMode::FixedUniform => {
                ManipulationPolicy::uniform(ctx.ops, cfg.fixed_lambda, alpha)
            }
            PolicyMode::NoAugment => ManipulationPolicy::uniform(ctx.ops, 0.0, 0.0),
        };

        // epoch-seeded shuffle
        let mut order = all_ids.clone();
        let mut shuffle_rng =
            seeds::rng_from(seeds::derive(cfg.master_seed, "shuffle", &[epoch]));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss_sum = 0.0;
        let mut epoch_batches = 0usize;
        let mut epoch_finite = true;
        for chunk in order.chunks(cfg.batch_size) {
            let (batch, record) = manipulate(chunk, &policy, ctx, epoch, global_step)?;
            if let Some(w) = provenance.as_deref_mut() {
                w.append(&record)?;
            }
            let data = BatchData {
                windows: batch.windows.iter().collect(),
                targets: batch.targets.clone(),
            };
            match train_batch(model, &data, &loss_cfg, &mut optimizer) {
                Ok(l) => {
                    epoch_loss_sum += l;
                    epoch_batches += 1;
                }
                Err(CoreError::Numerical(msg)) => {
                    log::warn!("epoch {epoch}: {msg}");
                    epoch_finite = false;
                    break;
                }
                Err(e) => return Err(e),
            }
            global_step += 1;

            // planner update every freq steps once started
            if cfg.policy_mode == PolicyMode::Planned
                && epoch >= cfg.planner_start_epoch
                && global_step.is_multiple_of(cfg.freq)
            {
                let planner_ref = planner.as_deref_mut().expect("checked above");
                let probe: Vec<ForecastSample> = rand::seq::index::sample(
                    &mut probe_rng,
                    ctx.samples.len(),
                    cfg.probe_batch.min(ctx.samples.len()),
                )
                .iter()
                .map(|i| ctx.samples[i].clone())
                .collect();
                let state = aggregate_state(&*model, &probe)?;
                let train_ids: Vec<usize> = chunk
                    .iter()
                    .copied()
                    .take(cfg.planner_train_batch.max(1))
                    .collect();
                let mut val_rng = seeds::rng_from(seeds::derive(
                    cfg.master_seed,
                    "planner-val",
                    &[epoch, global_step],
                ));
                let val_batch: Vec<ForecastSample> = rand::seq::index::sample(
                    &mut val_rng,
                    valid_samples.len(),
                    cfg.planner_val_batch.min(valid_samples.len()),
                )
                .iter()
                .map(|i| valid_samples[i].clone())
                .collect();
                planner_update(
                    planner_ref,
                    &*model,
                    &state,
                    &train_ids,
                    &val_batch,
                    ctx,
                    epoch,
                    &PlannerUpdateConfig {
                        beta: cfg.planner_lr,
                        inner_lr: cfg.learning_rate,
                        gamma_risk: cfg.gamma_risk,
                    },
                )?;
            }
        }

        let train_loss = if epoch_batches > 0 {
            epoch_loss_sum / epoch_batches as f64
        } else {
            f64::NAN
        };
        let stats = evaluate(&*model, valid_samples)?;
        let valid_loss = stats.mean_loss;
        let valid_std = stats.std_loss;

        let finite = epoch_finite && train_loss.is_finite() && valid_loss.is_finite();
        if finite {
            divergent_epochs = 0;
        } else {
            divergent_epochs += 1;
        }

        let improved = valid_loss.is_finite() && valid_loss < best - cfg.improvement_delta;
        if improved {
            best = valid_loss;
        }
        scheduler.observe_validation(improved);

        history.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
            valid_std,
            alpha,
            c_es: scheduler.c_es,
        });

        if divergent_epochs >= 3 {
            stop = StopReason::Diverged;
            break;
        }
        if scheduler.c_es >= cfg.patience {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    Ok(TrainOutcome {
        history,
        stop,
        best_valid_loss: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coint::build_coint_matrix_close;
    use crate::curation::{BinaryMixConfig, OhlcLayout};
    use crate::data::{chronological_split, fit_rolling_stats, make_windows, PanelSeries};
    use crate::mixups::MixSamplerConfig;
    use crate::models::LinearForecaster;
    use crate::policy::OperationSet;
    use ndarray::Array3;

    fn synthetic_panel(t: usize, stocks: usize, seed: u64) -> PanelSeries {
        let mut rng = seeds::rng_from(seeds::derive(seed, "panel", &[0]));
        use rand::Rng;
        let f = 5;
        let mut values = Array3::zeros((t, stocks, f));
        for s in 0..stocks {
            let mut price: f64 = 80.0 + 10.0 * s as f64;
            for ti in 0..t {
                let step: f64 = rng.random_range(-1.0..1.0);
                let open = price;
                let close = (price + step).max(1.0);
                let hi = open.max(close) * (1.0 + rng.random::<f64>() * 0.01);
                let lo = open.min(close) * (1.0 - rng.random::<f64>() * 0.01);
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

    struct Fixture {
        train_samples: Vec<crate::data::ForecastSample>,
        valid_samples: Vec<crate::data::ForecastSample>,
        stats: crate::data::RollingStats,
        coint: crate::coint::CointMatrix,
        train: PanelSeries,
        ops: OperationSet,
    }

    fn fixture(seed: u64) -> Fixture {
        let panel = synthetic_panel(140, 2, seed);
        let split = chronological_split(&panel, [0.6, 0.2, 0.2]).unwrap();
        let lookback = 8;
        let stats = fit_rolling_stats(&split.train, lookback).unwrap();
        let coint = build_coint_matrix_close(&split.train).unwrap();
        let train_samples = make_windows(&split.train, lookback).unwrap();
        let valid_samples = make_windows(&split.valid, lookback).unwrap();
        Fixture {
            train_samples,
            valid_samples,
            stats,
            coint,
            train: split.train,
            ops: OperationSet::default(),
        }
    }

    fn ctx<'a>(fx: &'a Fixture, master_seed: u64) -> ManipulationContext<'a> {
        ManipulationContext {
            ops: &fx.ops,
            stats: &fx.stats,
            coint: Some(&fx.coint),
            train: &fx.train,
            samples: &fx.train_samples,
            layout: OhlcLayout::default(),
            binary_mix: BinaryMixConfig::default(),
            sampler: MixSamplerConfig::default(),
            lookback: 8,
            master_seed,
        }
    }

    fn quick_config(mode: PolicyMode) -> TrainerConfig {
        TrainerConfig {
            max_epochs: 3,
            batch_size: 16,
            learning_rate: 1e-3,
            freq: 4,
            planner_start_epoch: 1,
            tau: 5.0,
            master_seed: 7,
            policy_mode: mode,
            probe_batch: 8,
            planner_train_batch: 4,
            planner_val_batch: 8,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn joint_loop_runs_and_logs_history() {
        let fx = fixture(1);
        let c = ctx(&fx, 7);
        let mut model = LinearForecaster::new(8, 5, 16, 3);
        let input_dim = 16 + 5 * 6;
        let mut planner = Planner::new(input_dim, 8, fx.ops.n(), fx.ops.cols(), 5);
        let out = joint_train(
            &quick_config(PolicyMode::Planned),
            &c,
            &fx.valid_samples,
            &mut model,
            Some(&mut planner),
            None,
        )
        .unwrap();
        assert_eq!(out.history.len(), 3);
        for row in &out.history {
            assert!(row.train_loss.is_finite());
            assert!(row.valid_loss.is_finite());
            assert!(row.alpha >= 0.0 && row.alpha <= 1.0);
        }
    }

    #[test]
    fn planner_with_huge_freq_matches_fixed_uniform_bit_exactly() {
        let fx = fixture(2);

        let run_planned = || {
            let c = ctx(&fx, 11);
            let mut model = LinearForecaster::new(8, 5, 16, 3);
            let mut planner = Planner::new(16 + 30, 8, fx.ops.n(), fx.ops.cols(), 5);
            let mut cfg = quick_config(PolicyMode::Planned);
            cfg.master_seed = 11;
            cfg.freq = u64::MAX; // planner never updates
            let out = joint_train(&cfg, &c, &fx.valid_samples, &mut model, Some(&mut planner), None)
                .unwrap();
            (out, model)
        };
        let run_fixed = || {
            let c = ctx(&fx, 11);
            let mut model = LinearForecaster::new(8, 5, 16, 3);
            let mut cfg = quick_config(PolicyMode::FixedUniform);
            cfg.master_seed = 11;
            cfg.fixed_lambda = 0.5; // zero-init λ head emits exactly 0.5
            let out = joint_train(&cfg, &c, &fx.valid_samples, &mut model, None, None).unwrap();
            (out, model)
        };

        let (out_a, model_a) = run_planned();
        let (out_b, model_b) = run_fixed();
        for (a, b) in out_a.history.iter().zip(&out_b.history) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.valid_loss.to_bits(), b.valid_loss.to_bits());
        }
        for name in model_a.params().names() {
            let ta = model_a.params().get(&name).unwrap();
            let tb = model_b.params().get(&name).unwrap();
            for (x, y) in ta.iter().zip(tb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn same_seed_reproduces_bit_exactly() {
        let fx = fixture(3);
        let run = || {
            let c = ctx(&fx, 13);
            let mut model = LinearForecaster::new(8, 5, 16, 3);
            let mut planner = Planner::new(16 + 30, 8, fx.ops.n(), fx.ops.cols(), 5);
            let mut cfg = quick_config(PolicyMode::Planned);
            cfg.master_seed = 13;
            joint_train(&cfg, &c, &fx.valid_samples, &mut model, Some(&mut planner), None)
                .unwrap()
                .history
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.valid_loss.to_bits(), y.valid_loss.to_bits());
        }
    }

    #[test]
    fn alpha_sequence_follows_scheduler() {
        let fx = fixture(4);
        let c = ctx(&fx, 17);
        let mut model = LinearForecaster::new(8, 5, 16, 3);
        let mut cfg = quick_config(PolicyMode::FixedUniform);
        cfg.max_epochs = 2;
        cfg.patience = 100;
        let out = joint_train(&cfg, &c, &fx.valid_samples, &mut model, None, None).unwrap();
        // epoch 0: counters equal → damped ramp
        assert!((out.history[0].alpha - 0.001).abs() < 1e-12);
    }

    #[test]
    fn planned_mode_without_planner_is_config_error() {
        let fx = fixture(5);
        let c = ctx(&fx, 19);
        let mut model = LinearForecaster::new(8, 5, 16, 3);
        let res = joint_train(
            &quick_config(PolicyMode::Planned),
            &c,
            &fx.valid_samples,
            &mut model,
            None,
            None,
        );
        assert!(res.is_err());
    }
}
