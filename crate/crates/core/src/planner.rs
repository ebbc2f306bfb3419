//! The learned controller: a small network mapping (model state, data
//! state) to policy entries (p, λ), and the bi-level update that
//! backpropagates a validation loss through one inner task-model step into
//! the policy heads.
//!
//! The strength path uses the straight-through convention ∂M/∂λ := 1; the
//! probability path gets the exact convex-combination gradient. Both flow
//! through the inner gradient step, which the tape differentiates exactly
//! (its backward pass is made of ordinary tape ops).

use crate::data::ForecastSample;
use crate::features::{featurize_data_state, DataStateFeatures};
use crate::manipulate::{augment_variants, ManipulationContext, VariantSet};
use crate::models::{extract_features, sharpe_loss_node, TaskModel};
use crate::policy::ManipulationPolicy;
use crate::{CoreError, Result};
use diffcore::{nn, NodeId, Optimizer, ParameterStore, Tape, TapeBindings};
use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two-layer perceptron with softmax and sigmoid heads. Zero-initialized
/// heads emit exactly uniform probabilities and λ = 0.5.
pub struct Planner {
    store: ParameterStore,
    pub input_dim: usize,
    pub hidden: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Planner {
    pub fn new(input_dim: usize, hidden: usize, rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let entries = rows * cols;
        nn::init_dense(&mut store, "l1", hidden, input_dim, &mut rng);
        nn::init_dense_zero(&mut store, "p_head", entries, hidden);
        nn::init_dense_zero(&mut store, "l_head", entries, hidden);
        Self {
            store,
            input_dim,
            hidden,
            rows,
            cols,
        }
    }

    pub fn params(&self) -> &ParameterStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn entries(&self) -> usize {
        self.rows * self.cols
    }

    /// Tape-level forward: state (input_dim × 1) → (p, λ), each
    /// (entries × 1). p sums to one; λ lives in the open interval (0, 1).
    pub fn forward_node(
        &self,
        tape: &mut Tape,
        bindings: &TapeBindings,
        input: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let got = tape.value(input).dim();
        if got != (self.input_dim, 1) {
            return Err(CoreError::Config(format!(
                "planner input {got:?}, expected ({}, 1)",
                self.input_dim
            )));
        }
        let h_pre = nn::dense(tape, bindings, "l1", input)?;
        let h = tape.tanh(h_pre);
        let p_logits = nn::dense(tape, bindings, "p_head", h)?;
        let p = nn::softmax_cols(tape, p_logits)?;
        let l_logits = nn::dense(tape, bindings, "l_head", h)?;
        let lambda = tape.sigmoid(l_logits);
        Ok((p, lambda))
    }

    /// Value-level forward, reshaped to the policy's (rows × cols) layout.
    pub fn forward_values(&self, state: &[f64]) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = Tape::new();
        let bindings = self.store.bind(&mut tape);
        let input = tape.constant(
            Array2::from_shape_vec((state.len(), 1), state.to_vec()).expect("column"),
        );
        let (p, lambda) = self.forward_node(&mut tape, &bindings, input)?;
        let reshape = |v: &Array2<f64>| {
            Array2::from_shape_vec((self.rows, self.cols), v.column(0).to_vec()).expect("shape")
        };
        Ok((reshape(tape.value(p)), reshape(tape.value(lambda))))
    }

    /// Emit a full policy for a given proportion α.
    pub fn policy(&self, state: &[f64], alpha: f64) -> Result<ManipulationPolicy> {
        let (p, lambda) = self.forward_values(state)?;
        Ok(ManipulationPolicy { p, lambda, alpha })
    }
}

/// Planner state vector: the task model's mean feature vector over a probe
/// batch concatenated with mean per-feature window statistics. Windows are
/// standardized per feature before featurization so the summary scales
/// stay O(1).
pub fn aggregate_state(model: &dyn TaskModel, probe: &[ForecastSample]) -> Result<Vec<f64>> {
    if probe.is_empty() {
        return Err(CoreError::InvalidData("empty probe batch".into()));
    }
    let mut feat_acc = vec![0.0; model.feature_width()];
    let width = DataStateFeatures::width(probe[0].window.ncols());
    let mut data_acc = vec![0.0; width];
    for s in probe {
        let f = extract_features(model, &s.window)?;
        for (acc, v) in feat_acc.iter_mut().zip(&f) {
            *acc += v;
        }
        let z = standardize_window(&s.window);
        let d = featurize_data_state(&z)?.flat();
        for (acc, v) in data_acc.iter_mut().zip(&d) {
            *acc += v;
        }
    }
    let n = probe.len() as f64;
    let mut state = Vec::with_capacity(feat_acc.len() + data_acc.len());
    state.extend(feat_acc.into_iter().map(|v| v / n));
    state.extend(data_acc.into_iter().map(|v| v / n));
    Ok(state)
}

fn standardize_window(w: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = w.dim();
    let mut out = w.clone();
    for c in 0..cols {
        let mean = w.column(c).sum() / rows as f64;
        let var = w.column(c).iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / rows as f64;
        let sd = (var + 1e-8).sqrt();
        for r in 0..rows {
            out[(r, c)] = (w[(r, c)] - mean) / sd;
        }
    }
    out
}

/// Builds the bi-level objective on the tape: blend variants under (p, λ),
/// take one plain-gradient step of the task model on the blend, and return
/// the stepped model's validation loss node.
///
/// `p` and `lambda` are (entries × 1) nodes; variant data is constant.
#[allow(clippy::too_many_arguments)]
fn build_bilevel_loss(
    tape: &mut Tape,
    p: NodeId,
    lambda: NodeId,
    model: &dyn TaskModel,
    variants: &[VariantSet],
    val_windows: &[&Array2<f64>],
    val_targets: &[f64],
    inner_lr: f64,
    gamma_risk: f64,
) -> Result<NodeId> {
    if variants.is_empty() || val_windows.is_empty() {
        return Err(CoreError::InvalidData(
            "bi-level update needs train variants and a validation batch".into(),
        ));
    }
    let entries = variants[0].rows * variants[0].cols;
    if tape.value(p).dim() != (entries, 1) || tape.value(lambda).dim() != (entries, 1) {
        return Err(CoreError::Config(format!(
            "policy nodes must be ({entries}, 1)"
        )));
    }

    // straight-through scalar: Σ_e p_e (λ_e − detach(λ_e)); zero in the
    // forward pass, routes ∂/∂λ_e := p_e into every blended element
    let lam_detached = tape.detach(lambda);
    let lam_delta = tape.sub(lambda, lam_detached)?;
    let st = tape.mul(p, lam_delta)?;
    let st_sum = tape.sum_all(st);

    let (wrows, wcols) = variants[0].windows[0].dim();
    let mut blended_windows = Vec::with_capacity(variants.len());
    let mut blended_targets = Vec::with_capacity(variants.len());
    for vs in variants {
        let mut window_acc: Option<NodeId> = None;
        let mut target_acc: Option<NodeId> = None;
        for e in 0..entries {
            let p_e = tape.slice_rows(p, e, 1)?;
            let p_b = tape.broadcast_all(p_e, wrows, wcols)?;
            let v = tape.constant(vs.windows[e].clone());
            let term = tape.mul(p_b, v)?;
            window_acc = Some(match window_acc {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
            let y = tape.constant_scalar(vs.targets[e]);
            let yterm = tape.mul(p_e, y)?;
            target_acc = Some(match target_acc {
                Some(acc) => tape.add(acc, yterm)?,
                None => yterm,
            });
        }
        let st_b = tape.broadcast_all(st_sum, wrows, wcols)?;
        let window = tape.add(window_acc.expect("entries ≥ 1"), st_b)?;
        blended_windows.push(window);
        blended_targets.push(target_acc.expect("entries ≥ 1"));
    }

    // inner step: θ' = θ − lr · ∇_θ L_train(θ, x̃̃)
    let theta = model.params().bind(tape);
    let pred = model.forward_node(tape, &theta, &blended_windows)?;
    let target_row = {
        let cols: Vec<NodeId> = blended_targets.clone();
        nn::concat_cols(tape, &cols)?
    };
    let per = nn::mse_per_sample(tape, pred, target_row)?;
    let l_train = sharpe_loss_node(tape, per, gamma_risk)?;
    let theta_ids = theta.ids();
    let grads = tape.grad(l_train, &theta_ids)?;
    let mut stepped = TapeBindings::new();
    for (name, (&tid, &gid)) in theta
        .names()
        .iter()
        .zip(theta_ids.iter().zip(grads.iter()))
    {
        let scaled = tape.mul_scalar(gid, inner_lr);
        let new = tape.sub(tid, scaled)?;
        stepped.insert(name, new);
    }

    // validation loss of the stepped model (plain mean squared error)
    let val_nodes: Vec<NodeId> = val_windows
        .iter()
        .map(|w| tape.constant((*w).clone()))
        .collect();
    let val_pred = model.forward_node(tape, &stepped, &val_nodes)?;
    let val_target = tape.constant(
        Array2::from_shape_vec((1, val_targets.len()), val_targets.to_vec()).expect("row"),
    );
    let val_per = nn::mse_per_sample(tape, val_pred, val_target)?;
    Ok(nn::mean_all(tape, val_per))
}

/// Validation loss and its gradients with respect to the policy entries,
/// holding the variants fixed. This is the planner update's inner
/// machinery, exposed so the gradient path can be checked against finite
/// differences and closed-form surrogates.
pub struct BilevelOutcome {
    pub val_loss: f64,
    pub grad_p: Array2<f64>,
    pub grad_lambda: Array2<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn bilevel_policy_gradient(
    model: &dyn TaskModel,
    policy: &ManipulationPolicy,
    variants: &[VariantSet],
    val_windows: &[&Array2<f64>],
    val_targets: &[f64],
    inner_lr: f64,
    gamma_risk: f64,
) -> Result<BilevelOutcome> {
    let (rows, cols) = policy.p.dim();
    let entries = rows * cols;
    let mut tape = Tape::new();
    let p = tape.leaf(
        Array2::from_shape_vec((entries, 1), policy.p.iter().copied().collect()).expect("col"),
    );
    let lambda = tape.leaf(
        Array2::from_shape_vec((entries, 1), policy.lambda.iter().copied().collect())
            .expect("col"),
    );
    let loss = build_bilevel_loss(
        &mut tape,
        p,
        lambda,
        model,
        variants,
        val_windows,
        val_targets,
        inner_lr,
        gamma_risk,
    )?;
    let val_loss = tape.scalar(loss)?;
    let grads = tape.grad(loss, &[p, lambda])?;
    let reshape = |t: &Array2<f64>| {
        Array2::from_shape_vec((rows, cols), t.column(0).to_vec()).expect("shape")
    };
    Ok(BilevelOutcome {
        val_loss,
        grad_p: reshape(tape.value(grads[0])),
        grad_lambda: reshape(tape.value(grads[1])),
    })
}

/// Hyperparameters of one planner update.
#[derive(Debug, Clone, Copy)]
pub struct PlannerUpdateConfig {
    /// Outer learning rate β.
    pub beta: f64,
    /// Learning rate of the inner plain-gradient step (the task model's
    /// current rate).
    pub inner_lr: f64,
    pub gamma_risk: f64,
}

/// What a planner update did.
#[derive(Debug, Clone, Copy)]
pub struct PlannerUpdateReport {
    pub val_loss: f64,
    pub applied: bool,
}

/// One outer update φ ← φ − β · ∇_φ L_val(f_θ′).
///
/// Builds x̃̃ from the current policy heads, steps a copy of the task
/// model on it, measures validation loss, and backpropagates through the
/// whole construction into φ. A non-finite validation loss skips the
/// update with a warning.
#[allow(clippy::too_many_arguments)]
pub fn planner_update(
    planner: &mut Planner,
    model: &dyn TaskModel,
    state: &[f64],
    train_ids: &[usize],
    val_batch: &[ForecastSample],
    ctx: &ManipulationContext,
    epoch: u64,
    cfg: &PlannerUpdateConfig,
) -> Result<PlannerUpdateReport> {
    if train_ids.is_empty() || val_batch.is_empty() {
        return Err(CoreError::InvalidData(
            "planner update needs train ids and a validation batch".into(),
        ));
    }
    // concrete λ values decide the variant data
    let (p_vals, lambda_vals) = planner.forward_values(state)?;
    let concrete = ManipulationPolicy {
        p: p_vals,
        lambda: lambda_vals,
        alpha: 1.0,
    };
    let mut variants = Vec::with_capacity(train_ids.len());
    for &sid in train_ids {
        variants.push(augment_variants(sid, &concrete, ctx, epoch)?);
    }

    let mut tape = Tape::new();
    let bindings = planner.params().bind(&mut tape);
    let input = tape.constant(
        Array2::from_shape_vec((state.len(), 1), state.to_vec()).expect("column"),
    );
    let (p_node, lambda_node) = planner.forward_node(&mut tape, &bindings, input)?;
    let val_windows: Vec<&Array2<f64>> = val_batch.iter().map(|s| &s.window).collect();
    let val_targets: Vec<f64> = val_batch.iter().map(|s| s.target).collect();
    let loss = build_bilevel_loss(
        &mut tape,
        p_node,
        lambda_node,
        model,
        &variants,
        &val_windows,
        &val_targets,
        cfg.inner_lr,
        cfg.gamma_risk,
    )?;
    let val_loss = tape.scalar(loss)?;
    if !val_loss.is_finite() {
        log::warn!("skipping planner update: non-finite validation loss {val_loss}");
        return Ok(PlannerUpdateReport {
            val_loss,
            applied: false,
        });
    }
    let ids = bindings.ids();
    let grads = tape.grad(loss, &ids)?;
    planner
        .params_mut()
        .absorb_grads(&tape, &bindings, &grads)?;
    let mut opt = Optimizer::sgd(cfg.beta);
    opt.step(planner.params_mut())?;
    Ok(PlannerUpdateReport {
        val_loss,
        applied: true,
    })
}
