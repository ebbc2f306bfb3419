//! Downstream forecasters with an explicit two-stage split: a feature
//! extractor j(·) ending in a fully connected layer of width
//! `feature_width` (default 128), and a predictor k(·) mapping features to
//! a scalar return. `forward = k(j(x))` by construction.

use crate::data::ForecastSample;
use crate::{CoreError, Result};
use diffcore::{nn, NodeId, Optimizer, ParameterStore, Tape, TapeBindings};
use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default planner-facing feature width.
pub const FEATURE_WIDTH: usize = 128;

/// Volatility-penalty weight for the training loss.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub gamma_risk: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma_risk: 0.05 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_risk < 0.0 {
            return Err(CoreError::Config(format!(
                "gamma_risk must be ≥ 0, got {}",
                self.gamma_risk
            )));
        }
        Ok(())
    }
}

/// mean(losses) + γ · population-std(losses), on the tape. The std term's
/// gradient at zero variance is 0 by the sqrt subgradient convention.
pub fn sharpe_loss_node(
    tape: &mut Tape,
    per_sample: NodeId,
    gamma_risk: f64,
) -> Result<NodeId> {
    let mean = nn::mean_all(tape, per_sample);
    if gamma_risk == 0.0 {
        return Ok(mean);
    }
    let std = nn::std_pop(tape, per_sample)?;
    let pen = tape.mul_scalar(std, gamma_risk);
    Ok(tape.add(mean, pen)?)
}

/// Value-level twin of [`sharpe_loss_node`].
pub fn sharpe_loss(per_sample: &[f64], gamma_risk: f64) -> Result<f64> {
    if per_sample.is_empty() {
        return Err(CoreError::InvalidData("empty loss vector".into()));
    }
    let n = per_sample.len() as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    let var = per_sample.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Ok(mean + gamma_risk * var.sqrt())
}

/// A forecaster the trainer, planner and diagnostics can drive over the
/// tape. Batches are windows side by side, predictions are (1 × batch).
pub trait TaskModel {
    fn name(&self) -> &'static str;
    fn params(&self) -> &ParameterStore;
    fn params_mut(&mut self) -> &mut ParameterStore;
    fn feature_width(&self) -> usize;

    /// j(·) over window nodes, each (lookback × features) → features
    /// (feature_width × batch).
    fn features_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        windows: &[NodeId],
    ) -> Result<NodeId>;

    /// k(·): features → predictions (1 × batch).
    fn predict_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        features: NodeId,
    ) -> Result<NodeId>;

    /// Full forward k(j(x)).
    fn forward_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        windows: &[NodeId],
    ) -> Result<NodeId> {
        let f = self.features_node(tape, bindings, windows)?;
        self.predict_node(tape, bindings, f)
    }
}

/// Feature vector of one window through the current parameters.
pub fn extract_features(model: &dyn TaskModel, window: &Array2<f64>) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bindings = model.params().bind(&mut tape);
    let w = tape.constant(window.clone());
    let f = model.features_node(&mut tape, &bindings, &[w])?;
    Ok(tape.value(f).column(0).to_vec())
}

/// Predictions for a set of windows through the current parameters.
pub fn forward_values(model: &dyn TaskModel, windows: &[&Array2<f64>]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bindings = model.params().bind(&mut tape);
    let nodes: Vec<NodeId> = windows.iter().map(|w| tape.constant((*w).clone())).collect();
    let out = model.forward_node(&mut tape, &bindings, &nodes)?;
    Ok(tape.value(out).row(0).to_vec())
}

/// Gated-recurrent forecaster: GRU(hidden) → FC(feature_width), tanh →
/// FC(1). Input windows are instance-normalized per feature unless
/// disabled.
pub struct GruForecaster {
    store: ParameterStore,
    pub input_dim: usize,
    pub hidden: usize,
    pub feature_width: usize,
    pub normalize_input: bool,
}

impl GruForecaster {
    pub fn new(input_dim: usize, hidden: usize, feature_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        nn::init_gru(&mut store, "gru", hidden, input_dim, &mut rng);
        nn::init_dense(&mut store, "feat", feature_width, hidden, &mut rng);
        nn::init_dense(&mut store, "head", 1, feature_width, &mut rng);
        Self {
            store,
            input_dim,
            hidden,
            feature_width,
            normalize_input: true,
        }
    }

    /// Spec-scale defaults: hidden 64, features 128.
    pub fn default_config(input_dim: usize, seed: u64) -> Self {
        Self::new(input_dim, 64, FEATURE_WIDTH, seed)
    }
}

/// Stack per-timestep input columns (features × batch) out of window nodes.
fn timestep_columns(
    tape: &mut Tape,
    windows: &[NodeId],
    lookback: usize,
) -> Result<Vec<NodeId>> {
    let mut steps = Vec::with_capacity(lookback);
    for t in 0..lookback {
        let cols: Vec<NodeId> = windows
            .iter()
            .map(|&w| -> Result<NodeId> {
                let row = tape.slice_rows(w, t, 1)?;
                Ok(tape.transpose(row))
            })
            .collect::<Result<_>>()?;
        steps.push(nn::concat_cols(tape, &cols)?);
    }
    Ok(steps)
}

fn maybe_norm(
    tape: &mut Tape,
    windows: &[NodeId],
    normalize: bool,
) -> Result<Vec<NodeId>> {
    if !normalize {
        return Ok(windows.to_vec());
    }
    windows
        .iter()
        .map(|&w| Ok(nn::instance_norm_window(tape, w, 1e-8)?))
        .collect()
}

impl TaskModel for GruForecaster {
    fn name(&self) -> &'static str {
        "gru"
    }

    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn feature_width(&self) -> usize {
        self.feature_width
    }

    fn features_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        windows: &[NodeId],
    ) -> Result<NodeId> {
        if windows.is_empty() {
            return Err(CoreError::InvalidData("empty window batch".into()));
        }
        let lookback = tape.value(windows[0]).nrows();
        for &w in windows {
            if tape.value(w).ncols() != self.input_dim {
                return Err(CoreError::InvalidData(format!(
                    "window has {} features, model expects {}",
                    tape.value(w).ncols(),
                    self.input_dim
                )));
            }
        }
        let normed = maybe_norm(tape, windows, self.normalize_input)?;
        let steps = timestep_columns(tape, &normed, lookback)?;
        let h = nn::gru_sequence(tape, bindings, "gru", &steps, self.hidden)?;
        let f_pre = nn::dense(tape, bindings, "feat", h)?;
        Ok(tape.tanh(f_pre))
    }

    fn predict_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        features: NodeId,
    ) -> Result<NodeId> {
        Ok(nn::dense(tape, bindings, "head", features)?)
    }
}

/// Linear-decomposition forecaster: flatten → FC(feature_width) → FC(1),
/// no activations, so the composite map stays linear.
pub struct LinearForecaster {
    store: ParameterStore,
    pub lookback: usize,
    pub input_dim: usize,
    pub feature_width: usize,
    pub normalize_input: bool,
}

impl LinearForecaster {
    pub fn new(lookback: usize, input_dim: usize, feature_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        nn::init_dense(&mut store, "feat", feature_width, lookback * input_dim, &mut rng);
        nn::init_dense(&mut store, "head", 1, feature_width, &mut rng);
        Self {
            store,
            lookback,
            input_dim,
            feature_width,
            normalize_input: true,
        }
    }

    pub fn default_config(lookback: usize, input_dim: usize, seed: u64) -> Self {
        Self::new(lookback, input_dim, FEATURE_WIDTH, seed)
    }
}

impl TaskModel for LinearForecaster {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn params(&self) -> &ParameterStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn feature_width(&self) -> usize {
        self.feature_width
    }

    fn features_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        windows: &[NodeId],
    ) -> Result<NodeId> {
        if windows.is_empty() {
            return Err(CoreError::InvalidData("empty window batch".into()));
        }
        let flat_dim = self.lookback * self.input_dim;
        let normed = maybe_norm(tape, windows, self.normalize_input)?;
        let cols: Vec<NodeId> = normed
            .iter()
            .map(|&w| {
                let (r, c) = {
                    let v = tape.value(w);
                    (v.nrows(), v.ncols())
                };
                if r * c != flat_dim {
                    return Err(CoreError::InvalidData(format!(
                        "window {r}x{c} does not flatten to {flat_dim}"
                    )));
                }
                Ok(tape.reshape(w, flat_dim, 1)?)
            })
            .collect::<Result<_>>()?;
        let x = nn::concat_cols(tape, &cols)?;
        Ok(nn::dense(tape, bindings, "feat", x)?)
    }

    fn predict_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        features: NodeId,
    ) -> Result<NodeId> {
        Ok(nn::dense(tape, bindings, "head", features)?)
    }
}

/// One training batch: borrowed windows plus their targets.
pub struct BatchData<'a> {
    pub windows: Vec<&'a Array2<f64>>,
    pub targets: Vec<f64>,
}

impl<'a> BatchData<'a> {
    pub fn from_samples(samples: &'a [ForecastSample]) -> Self {
        Self {
            windows: samples.iter().map(|s| &s.window).collect(),
            targets: samples.iter().map(|s| s.target).collect(),
        }
    }
}

/// One gradient step on one batch; returns the batch's training loss.
pub fn train_batch(
    model: &mut dyn TaskModel,
    batch: &BatchData,
    loss: &LossConfig,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    loss.validate()?;
    if batch.windows.is_empty() {
        return Err(CoreError::InvalidData("empty batch".into()));
    }
    let mut tape = Tape::new();
    let bindings = model.params().bind(&mut tape);
    let nodes: Vec<NodeId> = batch
        .windows
        .iter()
        .map(|w| tape.constant((*w).clone()))
        .collect();
    let pred = model.forward_node(&mut tape, &bindings, &nodes)?;
    let target = tape.constant(Array2::from_shape_vec(
        (1, batch.targets.len()),
        batch.targets.clone(),
    ).expect("row vector"));
    let per = nn::mse_per_sample(&mut tape, pred, target)?;
    let loss_node = sharpe_loss_node(&mut tape, per, loss.gamma_risk)?;
    let loss_value = tape.scalar(loss_node)?;
    if !loss_value.is_finite() {
        return Err(CoreError::Numerical(format!(
            "non-finite training loss {loss_value} on a batch of {}",
            batch.windows.len()
        )));
    }
    let ids = bindings.ids();
    let grads = tape.grad(loss_node, &ids)?;
    model
        .params_mut()
        .absorb_grads(&tape, &bindings, &grads)?;
    optimizer.step(model.params_mut())?;
    Ok(loss_value)
}

/// One full pass over the given batches. Deterministic given the batch
/// order; returns the mean batch loss.
pub fn train_epoch(
    model: &mut dyn TaskModel,
    batches: &[BatchData],
    loss: &LossConfig,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    if batches.is_empty() {
        return Err(CoreError::InvalidData("no batches".into()));
    }
    let mut total = 0.0;
    for batch in batches {
        total += train_batch(model, batch, loss, optimizer)?;
    }
    Ok(total / batches.len() as f64)
}

/// Evaluation statistics: per-sample squared errors with their mean and
/// population standard deviation.
#[derive(Debug, Clone)]
pub struct EvalStats {
    pub mean_loss: f64,
    pub per_sample: Vec<f64>,
    pub std_loss: f64,
}

pub fn evaluate(model: &dyn TaskModel, samples: &[ForecastSample]) -> Result<EvalStats> {
    if samples.is_empty() {
        return Err(CoreError::InvalidData("empty evaluation set".into()));
    }
    // chunk to keep tapes small
    let mut per_sample = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let windows: Vec<&Array2<f64>> = chunk.iter().map(|s| &s.window).collect();
        let preds = forward_values(model, &windows)?;
        for (p, s) in preds.iter().zip(chunk) {
            let e = p - s.target;
            per_sample.push(e * e);
        }
    }
    let n = per_sample.len() as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    let var = per_sample.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Ok(EvalStats {
        mean_loss: mean,
        per_sample,
        std_loss: var.sqrt(),
    })
}

/// Clone parameters into a detached store (the planner's f_θ' copy).
pub fn clone_params(model: &dyn TaskModel) -> ParameterStore {
    model.params().clone()
}
