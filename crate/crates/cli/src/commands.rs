//! Command bodies. Every command writes a manifest (config hash, seed,
//! version) into the output directory alongside its artifacts.

use crate::config::RunConfig;
use crate::prepare::PreparedData;
use driftforge_core::data::{ForecastSample, CLOSE};
use driftforge_core::diagnostics::proximity_report;
use driftforge_core::discriminative::{discriminative_score, DiscriminatorConfig};
use driftforge_core::env::{
    run_episode, BuyAndHold, EnvConfig, RandomPolicy, TradingEnv, TradingPolicy,
};
use driftforge_core::facts::{returns_from_prices, stylized_facts};
use driftforge_core::manipulate::{manipulate, replay, AugmentedBatch};
use driftforge_core::models::{GruForecaster, LinearForecaster, TaskModel};
use driftforge_core::planner::Planner;
use driftforge_core::policy::ManipulationPolicy;
use driftforge_core::provenance::{read_provenance_log, ProvenanceWriter};
use driftforge_core::train::{joint_train, write_history_csv, PolicyMode};
use driftforge_core::{CoreError, Result};
use ndarray::Array2;
use std::io::Write;
use std::path::{Path, PathBuf};

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    let manifest = serde_json::json!({
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let path = cfg.out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("json"))?;
    Ok(())
}

pub fn cmd_config_defaults() -> Result<()> {
    print!("{}", RunConfig::defaults().to_toml());
    Ok(())
}

/// Load, align, and cache the panel; emit a schema report.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let panel_path = cfg.out_dir.join("panel.csv");
    let mut f = std::fs::File::create(&panel_path)?;
    writeln!(
        f,
        "timestamp,stock,{}",
        data.panel.feature_ids().join(",")
    )?;
    for (ti, ts) in data.panel.timestamps().iter().enumerate() {
        for (si, stock) in data.panel.stock_ids().iter().enumerate() {
            let cells: Vec<String> = (0..data.panel.num_features())
                .map(|fi| format!("{}", data.panel.get(ti, si, fi)))
                .collect();
            writeln!(f, "{ts},{stock},{}", cells.join(","))?;
        }
    }
    let report_path = cfg.out_dir.join("schema_report.csv");
    let mut r = std::fs::File::create(&report_path)?;
    writeln!(r, "stock,input_rows,grid_rows,filled_cells_total")?;
    for (stock, rows) in &data.report.per_stock_rows {
        writeln!(
            r,
            "{stock},{rows},{},{}",
            data.report.grid_len, data.report.filled_cells
        )?;
    }
    if let Some(coint) = &data.coint {
        coint.write_csv(&cfg.out_dir.join("coint_matrix.csv"))?;
    }
    write_manifest(cfg, "ingest")?;
    println!(
        "ingested {} rows x {} stocks x {} features -> {}",
        data.panel.len(),
        data.panel.num_stocks(),
        data.panel.num_features(),
        panel_path.display()
    );
    Ok(())
}

/// Rolling validation-test proximity table.
pub fn cmd_drift_report(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let report = proximity_report(
        &data.panel,
        cfg.diagnostics.folds,
        cfg.split.ratios,
        cfg.diagnostics.psi_bins,
    )?;
    let path = cfg.out_dir.join("drift_report.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "fold,pair,metric,value")?;
    for fold in &report.folds {
        for (pair, m) in [("train_test", fold.train_test), ("valid_test", fold.valid_test)] {
            writeln!(f, "{},{pair},psi,{}", fold.fold, m.psi)?;
            writeln!(f, "{},{pair},ks,{}", fold.fold, m.ks)?;
            writeln!(f, "{},{pair},mmd2,{}", fold.fold, m.mmd2)?;
        }
    }
    for (pair, m) in [
        ("train_test", report.avg_train_test),
        ("valid_test", report.avg_valid_test),
    ] {
        writeln!(f, "avg,{pair},psi,{}", m.psi)?;
        writeln!(f, "avg,{pair},ks,{}", m.ks)?;
        writeln!(f, "avg,{pair},mmd2,{}", m.mmd2)?;
    }
    write_manifest(cfg, "drift-report")?;
    println!(
        "drift report over {} folds -> {} (avg PSI train-test {:.4} vs valid-test {:.4})",
        report.folds.len(),
        path.display(),
        report.avg_train_test.psi,
        report.avg_valid_test.psi
    );
    Ok(())
}

fn write_augmented_csv(
    path: &Path,
    batches: &[AugmentedBatch],
    samples: &[ForecastSample],
    feature_ids: &[String],
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "batch,sample_id,stock,end_timestamp,row,{},target,manipulated",
        feature_ids.join(",")
    )?;
    for (bi, batch) in batches.iter().enumerate() {
        for (i, &sid) in batch.sample_ids.iter().enumerate() {
            let sample = &samples[sid];
            let w = &batch.windows[i];
            for r in 0..w.nrows() {
                let cells: Vec<String> = (0..w.ncols()).map(|c| format!("{}", w[(r, c)])).collect();
                writeln!(
                    f,
                    "{bi},{sid},{},{},{r},{},{},{}",
                    sample.stock,
                    sample.end_timestamp,
                    cells.join(","),
                    batch.targets[i],
                    u8::from(batch.manipulated[i])
                )?;
            }
        }
    }
    Ok(())
}

/// One-shot manipulation of the whole training set under a fixed uniform
/// policy, with a replayable provenance log.
pub fn cmd_augment(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let ctx = data.ctx(cfg);
    let policy = ManipulationPolicy::uniform(&data.ops, cfg.augment.lambda, cfg.augment.alpha);
    let prov_path = cfg.out_dir.join("provenance.jsonl");
    let mut writer = ProvenanceWriter::create(&prov_path)?;
    let ids: Vec<usize> = (0..data.train_samples.len()).collect();
    let mut batches = Vec::new();
    for (step, chunk) in ids.chunks(cfg.trainer.batch_size).enumerate() {
        let (batch, record) = manipulate(chunk, &policy, &ctx, 0, step as u64)?;
        writer.append(&record)?;
        batches.push(batch);
    }
    writer.flush()?;
    let out_path = cfg.out_dir.join("augmented.csv");
    write_augmented_csv(&out_path, &batches, &data.train_samples, data.panel.feature_ids())?;
    write_manifest(cfg, "augment")?;
    let manipulated: usize = batches.iter().map(|b| b.manipulated_count()).sum();
    println!(
        "augmented {} samples ({manipulated} manipulated) -> {} + {}",
        data.train_samples.len(),
        out_path.display(),
        prov_path.display()
    );
    Ok(())
}

fn build_model(cfg: &RunConfig, input_dim: usize) -> Box<dyn TaskModel> {
    match cfg.trainer.model.as_str() {
        "linear" => Box::new(LinearForecaster::new(
            cfg.window.lookback,
            input_dim,
            cfg.trainer.feature_width,
            cfg.seed ^ 0x6d6f64,
        )),
        _ => Box::new(GruForecaster::new(
            input_dim,
            cfg.trainer.hidden,
            cfg.trainer.feature_width,
            cfg.seed ^ 0x6d6f64,
        )),
    }
}

/// The joint training loop; emits history, checkpoints and provenance.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let ctx = data.ctx(cfg);
    let input_dim = data.panel.num_features();
    let mut model = build_model(cfg, input_dim);
    let planner_input =
        cfg.trainer.feature_width + input_dim * driftforge_core::features::DataStateFeatures::PER_FEATURE;
    let mut planner = Planner::new(
        planner_input,
        cfg.trainer.planner_hidden,
        data.ops.n(),
        data.ops.cols(),
        cfg.seed ^ 0x706c,
    );
    let prov_path = cfg.out_dir.join("provenance.jsonl");
    let mut writer = ProvenanceWriter::create(&prov_path)?;
    let trainer_cfg = cfg.trainer_config();
    let planner_opt = if trainer_cfg.policy_mode == PolicyMode::Planned {
        Some(&mut planner)
    } else {
        None
    };
    let outcome = joint_train(
        &trainer_cfg,
        &ctx,
        &data.valid_samples,
        model.as_mut(),
        planner_opt,
        Some(&mut writer),
    )?;
    writer.flush()?;
    write_history_csv(&outcome.history, &cfg.out_dir.join("history.csv"))?;
    diffcore::save_checkpoint(model.params(), &cfg.out_dir.join("model.ckpt"))?;
    diffcore::save_checkpoint(planner.params(), &cfg.out_dir.join("planner.ckpt"))?;
    write_manifest(cfg, "train")?;
    let test_stats = driftforge_core::models::evaluate(model.as_mut(), &data.test_samples)?;
    println!(
        "trained {} epochs (stop: {:?}), best valid MSE {:.6e}, test MSE {:.6e}",
        outcome.history.len(),
        outcome.stop,
        outcome.best_valid_loss,
        test_stats.mean_loss
    );
    Ok(())
}

/// Regenerate augmented batches from a provenance log and verify them
/// bit-exactly.
pub fn cmd_replay(cfg: &RunConfig, log_path: Option<PathBuf>) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let ctx = data.ctx(cfg);
    let log_path = log_path.unwrap_or_else(|| cfg.out_dir.join("provenance.jsonl"));
    let records = read_provenance_log(&log_path)?;
    if records.is_empty() {
        return Err(CoreError::InvalidData(format!(
            "{} holds no provenance records",
            log_path.display()
        )));
    }
    let batches = replay(&records, &ctx)?;
    let out_path = cfg.out_dir.join("replayed.csv");
    write_augmented_csv(&out_path, &batches, &data.train_samples, data.panel.feature_ids())?;
    write_manifest(cfg, "replay")?;
    println!(
        "replayed {} batches from {} bit-exactly -> {}",
        batches.len(),
        log_path.display(),
        out_path.display()
    );
    Ok(())
}

/// Stylized-facts table per stock.
pub fn cmd_stylized_facts(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let path = cfg.out_dir.join("stylized_facts.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "stock,statistic,lag,value")?;
    for (si, stock) in data.panel.stock_ids().iter().enumerate() {
        let closes = data.panel.series(si, CLOSE);
        let rets = returns_from_prices(&closes)?;
        let report = stylized_facts(&rets, cfg.diagnostics.max_lag, cfg.diagnostics.vol_window)?;
        for (lag, v) in report.acf_returns.iter().enumerate() {
            writeln!(f, "{stock},acf_returns,{lag},{v}")?;
        }
        for (lag, v) in report.acf_abs_returns.iter().enumerate() {
            writeln!(f, "{stock},acf_abs_returns,{lag},{v}")?;
        }
        for (lag, v) in report.leverage.iter().enumerate() {
            writeln!(f, "{stock},leverage,{},{v}", lag + 1)?;
        }
    }
    write_manifest(cfg, "stylized-facts")?;
    println!("stylized facts -> {}", path.display());
    Ok(())
}

/// Read windows back out of an augmented CSV (one row per timestep).
fn read_augmented_windows(path: &Path, lookback: usize) -> Result<Vec<Array2<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::InvalidData("empty augmented file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let feature_start = 5; // batch,sample_id,stock,end_timestamp,row
    let feature_end = cols.len() - 2; // ...,target,manipulated
    let num_features = feature_end - feature_start;
    let mut windows = Vec::new();
    let mut current: Option<(String, Array2<f64>)> = None;
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols.len() {
            return Err(CoreError::InvalidData(format!(
                "malformed augmented row: {line}"
            )));
        }
        let key = format!("{}:{}", parts[0], parts[1]);
        let row: usize = parts[4]
            .parse()
            .map_err(|_| CoreError::InvalidData(format!("bad row index in: {line}")))?;
        if row == 0 {
            if let Some((_, w)) = current.take() {
                windows.push(w);
            }
            current = Some((key, Array2::zeros((lookback, num_features))));
        }
        let (_, w) = current
            .as_mut()
            .ok_or_else(|| CoreError::InvalidData("augmented file does not start at row 0".into()))?;
        for (c, cell) in parts[feature_start..feature_end].iter().enumerate() {
            w[(row, c)] = cell
                .parse()
                .map_err(|_| CoreError::InvalidData(format!("bad value `{cell}`")))?;
        }
    }
    if let Some((_, w)) = current.take() {
        windows.push(w);
    }
    Ok(windows)
}

/// Real-vs-synthetic discriminative score against an augmented CSV.
pub fn cmd_discriminate(cfg: &RunConfig, synthetic: PathBuf) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let synth = read_augmented_windows(&synthetic, cfg.window.lookback)?;
    let real: Vec<Array2<f64>> = data
        .train_samples
        .iter()
        .map(|s| s.window.clone())
        .collect();
    // balance class sizes
    let n = real.len().min(synth.len());
    let score = discriminative_score(
        &real[..n],
        &synth[..n],
        &DiscriminatorConfig::default(),
        cfg.seed,
    )?;
    let path = cfg.out_dir.join("discriminative.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "metric,value")?;
    writeln!(f, "discriminative_score,{score}")?;
    write_manifest(cfg, "discriminate")?;
    println!("discriminative score {score:.4} -> {}", path.display());
    Ok(())
}

/// Baseline policies through the trading environment on the test slice.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let data = PreparedData::load(cfg)?;
    let env_cfg = EnvConfig {
        initial_cash: cfg.env.initial_cash,
        cost: cfg.env.transaction_cost,
        discount: cfg.env.discount,
        lookback: cfg.window.lookback,
    };
    let metrics_path = cfg.out_dir.join("backtest_metrics.csv");
    let mut mf = std::fs::File::create(&metrics_path)?;
    writeln!(mf, "stock,policy,total_return,sharpe_ratio,degenerate,trades")?;
    for (si, stock) in data.split.test.stock_ids().iter().enumerate() {
        let policies: Vec<(&str, Box<dyn TradingPolicy>)> = vec![
            ("buy_and_hold", Box::new(BuyAndHold::default())),
            ("random", Box::new(RandomPolicy::new(cfg.seed ^ si as u64))),
        ];
        for (name, mut policy) in policies {
            let mut env = TradingEnv::new(&data.split.test, si, env_cfg.clone())?;
            let (rows, metrics) = run_episode(&mut env, policy.as_mut())?;
            writeln!(
                mf,
                "{stock},{name},{},{},{},{}",
                metrics.total_return,
                metrics.sharpe_ratio,
                u8::from(metrics.degenerate_sharpe),
                metrics.trades
            )?;
            let traj_path = cfg.out_dir.join(format!("trajectory_{stock}_{name}.csv"));
            let mut tf = std::fs::File::create(&traj_path)?;
            writeln!(tf, "t,price,action,position,value,reward")?;
            for r in rows {
                writeln!(
                    tf,
                    "{},{},{},{},{},{}",
                    r.t, r.price, r.action, r.position, r.value, r.reward
                )?;
            }
        }
    }
    write_manifest(cfg, "backtest")?;
    println!("backtest metrics -> {}", metrics_path.display());
    Ok(())
}
