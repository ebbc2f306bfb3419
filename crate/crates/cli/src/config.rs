//! Run configuration: one TOML file per run, every default embedded here,
//! with `DRIFTFORGE_*` environment overrides mapped onto config keys.

use driftforge_core::curation::BinaryMixConfig;
use driftforge_core::ingest::CsvSchema;
use driftforge_core::mixups::{MixKind, MixSamplerConfig};
use driftforge_core::train::{PolicyMode, TrainerConfig};
use driftforge_core::transforms::TransformKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Field-level configuration error; surfaces as exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub paths: Vec<PathBuf>,
    pub timestamp_column: String,
    pub stock_column: Option<String>,
    pub feature_columns: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        let schema = CsvSchema::default();
        Self {
            paths: Vec::new(),
            timestamp_column: schema.timestamp_column,
            stock_column: None,
            feature_columns: schema.feature_columns,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            ratios: [0.6, 0.2, 0.2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub lookback: usize,
    pub stats_window: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            lookback: 60,
            stats_window: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpsSection {
    pub transforms: Vec<TransformKind>,
    pub mixups: Vec<MixKind>,
}

impl Default for OpsSection {
    fn default() -> Self {
        Self {
            transforms: TransformKind::ALL.to_vec(),
            mixups: MixKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// planned | fixed | none
    pub mode: String,
    pub fixed_lambda: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            mode: "planned".into(),
            fixed_lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub candidates: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { candidates: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryMixSection {
    pub b_max: f64,
    pub bins: usize,
}

impl Default for BinaryMixSection {
    fn default() -> Self {
        Self { b_max: 0.5, bins: 16 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub tau: f64,
    pub delta: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            tau: 10.0,
            delta: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    /// gru | linear
    pub model: String,
    pub hidden: usize,
    pub feature_width: usize,
    pub max_epochs: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma_risk: f64,
    pub freq: u64,
    pub planner_lr: f64,
    pub planner_hidden: usize,
    pub start_epoch: u64,
    pub patience: u64,
    pub probe_batch: usize,
    pub planner_train_batch: usize,
    pub planner_val_batch: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            model: "gru".into(),
            hidden: 64,
            feature_width: 128,
            max_epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            gamma_risk: 0.05,
            freq: 10,
            planner_lr: 1e-3,
            planner_hidden: 64,
            start_epoch: 5,
            patience: 5,
            probe_batch: 32,
            planner_train_batch: 16,
            planner_val_batch: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub initial_cash: f64,
    pub transaction_cost: f64,
    pub discount: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            initial_cash: 1e4,
            transaction_cost: 1e-3,
            discount: 0.99,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub folds: usize,
    pub psi_bins: usize,
    pub max_lag: usize,
    pub vol_window: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            folds: 10,
            psi_bins: 10,
            max_lag: 20,
            vol_window: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.5,
        }
    }
}

/// The whole run configuration. `seed` is mandatory: runs never seed from
/// the wall clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub ops: OpsSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub binary_mix: BinaryMixSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub augment: AugmentSection,
}

impl RunConfig {
    /// Parse a TOML file, apply `DRIFTFORGE_*` environment overrides and
    /// validate.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("config", format!("{}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| err("config", format!("parse error: {e}")))?;
        apply_env_overrides(&mut table, std::env::vars());
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| err("config", format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults with a placeholder seed, for `config --defaults`.
    pub fn defaults() -> RunConfig {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("runs/out"),
            data: DataSection::default(),
            split: SplitSection::default(),
            window: WindowSection::default(),
            ops: OpsSection::default(),
            policy: PolicySection::default(),
            sampler: SamplerSection::default(),
            binary_mix: BinaryMixSection::default(),
            scheduler: SchedulerSection::default(),
            trainer: TrainerSection::default(),
            env: EnvSection::default(),
            diagnostics: DiagnosticsSection::default(),
            augment: AugmentSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ratio_sum: f64 = self.split.ratios.iter().sum();
        if self.split.ratios.iter().any(|&r| r <= 0.0) || (ratio_sum - 1.0).abs() > 1e-9 {
            return Err(err(
                "split.ratios",
                format!("must be positive and sum to 1, got {:?}", self.split.ratios),
            ));
        }
        if self.window.lookback < 2 {
            return Err(err("window.lookback", "must be ≥ 2"));
        }
        if self.window.stats_window < 2 {
            return Err(err("window.stats_window", "must be ≥ 2"));
        }
        if self.ops.transforms.is_empty() {
            return Err(err("ops.transforms", "need at least one transform"));
        }
        match self.policy.mode.as_str() {
            "planned" | "fixed" | "none" => {}
            other => {
                return Err(err(
                    "policy.mode",
                    format!("unknown mode `{other}` (planned | fixed | none)"),
                ))
            }
        }
        if !(0.0..=1.0).contains(&self.policy.fixed_lambda) {
            return Err(err("policy.fixed_lambda", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.augment.alpha) {
            return Err(err("augment.alpha", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.augment.lambda) {
            return Err(err("augment.lambda", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.binary_mix.b_max) {
            return Err(err("binary_mix.b_max", "must lie in [0, 1]"));
        }
        if self.binary_mix.bins < 2 {
            return Err(err("binary_mix.bins", "must be ≥ 2"));
        }
        if self.scheduler.tau <= 0.0 {
            return Err(err("scheduler.tau", "must be > 0"));
        }
        match self.trainer.model.as_str() {
            "gru" | "linear" => {}
            other => {
                return Err(err(
                    "trainer.model",
                    format!("unknown model `{other}` (gru | linear)"),
                ))
            }
        }
        if self.trainer.freq < 1 {
            return Err(err("trainer.freq", "must be ≥ 1"));
        }
        if self.trainer.batch_size < 1 {
            return Err(err("trainer.batch_size", "must be ≥ 1"));
        }
        if self.sampler.candidates < 1 {
            return Err(err("sampler.candidates", "must be ≥ 1"));
        }
        if self.env.initial_cash <= 0.0 {
            return Err(err("env.initial_cash", "must be positive"));
        }
        if !(0.0..0.1).contains(&self.env.transaction_cost) {
            return Err(err("env.transaction_cost", "must lie in [0, 0.1)"));
        }
        if self.diagnostics.folds < 1 {
            return Err(err("diagnostics.folds", "must be ≥ 1"));
        }
        for path in &self.data.paths {
            if !path.exists() {
                return Err(err(
                    "data.paths",
                    format!("{} does not exist", path.display()),
                ));
            }
        }
        Ok(())
    }

    pub fn csv_schema(&self) -> CsvSchema {
        CsvSchema {
            timestamp_column: self.data.timestamp_column.clone(),
            stock_column: self.data.stock_column.clone(),
            feature_columns: self.data.feature_columns.clone(),
        }
    }

    pub fn binary_mix_config(&self) -> BinaryMixConfig {
        BinaryMixConfig {
            b_max: self.binary_mix.b_max,
            bins: self.binary_mix.bins,
        }
    }

    pub fn sampler_config(&self) -> MixSamplerConfig {
        MixSamplerConfig {
            candidates: self.sampler.candidates,
        }
    }

    pub fn policy_mode(&self) -> PolicyMode {
        match self.policy.mode.as_str() {
            "planned" => PolicyMode::Planned,
            "fixed" => PolicyMode::FixedUniform,
            _ => PolicyMode::NoAugment,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            max_epochs: self.trainer.max_epochs,
            batch_size: self.trainer.batch_size,
            learning_rate: self.trainer.learning_rate,
            gamma_risk: self.trainer.gamma_risk,
            freq: self.trainer.freq,
            planner_lr: self.trainer.planner_lr,
            planner_start_epoch: self.trainer.start_epoch,
            patience: self.trainer.patience,
            improvement_delta: self.scheduler.delta,
            tau: self.scheduler.tau,
            master_seed: self.seed,
            policy_mode: self.policy_mode(),
            fixed_lambda: self.policy.fixed_lambda,
            probe_batch: self.trainer.probe_batch,
            planner_train_batch: self.trainer.planner_train_batch,
            planner_val_batch: self.trainer.planner_val_batch,
        }
    }

    /// Hash of the canonical serialized configuration.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        let d = h.finalize();
        d.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Map `DRIFTFORGE_SECTION__KEY=value` (and `DRIFTFORGE_SEED` etc. for
/// top-level fields) onto the parsed TOML tree before deserialization.
/// Values parse as TOML scalars when possible, else as strings.
pub fn apply_env_overrides(
    table: &mut toml::Table,
    vars: impl Iterator<Item = (String, String)>,
) {
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix("DRIFTFORGE_") else {
            continue;
        };
        let path: Vec<String> = rest
            .split("__")
            .map(|p| p.to_ascii_lowercase())
            .collect();
        if path.is_empty() || path.iter().any(|p| p.is_empty()) {
            continue;
        }
        let parsed: toml::Value = raw
            .parse::<toml::Value>()
            .unwrap_or(toml::Value::String(raw.clone()));
        insert_path(table, &path, parsed);
    }
}

fn insert_path(table: &mut toml::Table, path: &[String], v: toml::Value) {
    if path.len() == 1 {
        table.insert(path[0].clone(), v);
        return;
    }
    let entry = table
        .entry(path[0].clone())
        .or_insert(toml::Value::Table(Default::default()));
    if let Some(child) = entry.as_table_mut() {
        insert_path(child, &path[1..], v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::defaults();
        let text = cfg.to_toml();
        let back: RunConfig = toml::Value::Table(text.parse::<toml::Table>().unwrap())
            .try_into()
            .unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.window.lookback, 60);
        assert_eq!(back.ops.transforms.len(), 5);
        assert_eq!(back.ops.mixups.len(), 4);
    }

    #[test]
    fn bad_ratios_name_the_field() {
        let mut cfg = RunConfig::defaults();
        cfg.split.ratios = [0.6, 0.2, 0.3];
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.field, "split.ratios");
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let mut value: toml::Table = "seed = 1\nout_dir = \"x\"\n".parse().unwrap();
        apply_env_overrides(
            &mut value,
            vec![
                ("DRIFTFORGE_SEED".to_string(), "99".to_string()),
                ("DRIFTFORGE_TRAINER__FREQ".to_string(), "3".to_string()),
                ("OTHER_VAR".to_string(), "ignored".to_string()),
            ]
            .into_iter(),
        );
        let cfg: RunConfig = toml::Value::Table(value).try_into().unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.trainer.freq, 3);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::defaults();
        let mut b = RunConfig::defaults();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 43;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
