//! Post-hoc real-vs-synthetic discrimination: train a small recurrent
//! classifier and report held-out accuracy minus 0.5. Near zero means the
//! synthetic windows are indistinguishable from real ones.

use crate::{CoreError, Result};
use diffcore::{nn, NodeId, Optimizer, ParameterStore, Tape};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Discriminator configuration: a deliberately modest recurrent probe.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    /// Train fraction of the combined set.
    pub split: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            max_epochs: 20,
            learning_rate: 0.01,
            patience: 5,
            split: 0.8,
        }
    }
}

struct Classifier {
    store: ParameterStore,
    hidden: usize,
    input_dim: usize,
    /// Global per-feature standardization fitted on the training windows,
    /// so level shifts between real and synthetic stay visible.
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Classifier {
    fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        nn::init_gru(&mut store, "gru", hidden, input_dim, &mut rng);
        nn::init_dense(&mut store, "head", 1, hidden, &mut rng);
        Self {
            store,
            hidden,
            input_dim,
            means: vec![0.0; input_dim],
            stds: vec![1.0; input_dim],
        }
    }

    fn fit_scaler(&mut self, windows: &[&Array2<f64>]) {
        let mut count = 0.0;
        let mut means = vec![0.0; self.input_dim];
        for w in windows {
            for r in 0..w.nrows() {
                for c in 0..self.input_dim {
                    means[c] += w[(r, c)];
                }
            }
            count += w.nrows() as f64;
        }
        for m in &mut means {
            *m /= count;
        }
        let mut vars = vec![0.0; self.input_dim];
        for w in windows {
            for r in 0..w.nrows() {
                for c in 0..self.input_dim {
                    let d = w[(r, c)] - means[c];
                    vars[c] += d * d;
                }
            }
        }
        self.means = means;
        self.stds = vars
            .into_iter()
            .map(|v| (v / count).sqrt().max(1e-8))
            .collect();
    }

    fn scale(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut out = w.clone();
        for ((_, c), v) in out.indexed_iter_mut() {
            *v = (*v - self.means[c]) / self.stds[c];
        }
        out
    }

    /// Forward probabilities for a batch of windows.
    fn forward(&self, tape: &mut Tape, windows: &[&Array2<f64>]) -> Result<NodeId> {
        let bindings = self.store.bind(tape);
        let lookback = windows[0].nrows();
        let mut steps = Vec::with_capacity(lookback);
        let scaled: Vec<Array2<f64>> = windows.iter().map(|w| self.scale(w)).collect();
        let nodes: Vec<NodeId> = scaled.iter().map(|w| tape.constant(w.clone())).collect();
        for t in 0..lookback {
            let cols: Vec<NodeId> = nodes
                .iter()
                .map(|&w| -> Result<NodeId> {
                    let row = tape.slice_rows(w, t, 1)?;
                    Ok(tape.transpose(row))
                })
                .collect::<Result<_>>()?;
            steps.push(nn::concat_cols(tape, &cols)?);
        }
        let h = nn::gru_sequence(tape, &bindings, "gru", &steps, self.hidden)?;
        let logits = nn::dense(tape, &bindings, "head", h)?;
        Ok(tape.sigmoid(logits))
    }

    fn train_step(
        &mut self,
        windows: &[&Array2<f64>],
        labels: &[f64],
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let bindings = self.store.bind(&mut tape);
        let lookback = windows[0].nrows();
        let scaled: Vec<Array2<f64>> = windows.iter().map(|w| self.scale(w)).collect();
        let nodes: Vec<NodeId> = scaled.iter().map(|w| tape.constant(w.clone())).collect();
        let mut steps = Vec::with_capacity(lookback);
        for t in 0..lookback {
            let cols: Vec<NodeId> = nodes
                .iter()
                .map(|&w| -> Result<NodeId> {
                    let row = tape.slice_rows(w, t, 1)?;
                    Ok(tape.transpose(row))
                })
                .collect::<Result<_>>()?;
            steps.push(nn::concat_cols(&mut tape, &cols)?);
        }
        let h = nn::gru_sequence(&mut tape, &bindings, "gru", &steps, self.hidden)?;
        let logits = nn::dense(&mut tape, &bindings, "head", h)?;
        let probs = tape.sigmoid(logits);
        // binary cross-entropy with clamping via the sigmoid's open range
        let y = tape.constant(
            Array2::from_shape_vec((1, labels.len()), labels.to_vec()).expect("row"),
        );
        let lp = tape.ln(probs);
        let term1 = tape.mul(y, lp)?;
        let np = tape.neg(probs);
        let one_m_p = tape.add_scalar(np, 1.0);
        let lq = tape.ln(one_m_p);
        let ny = tape.neg(y);
        let one_m_y = tape.add_scalar(ny, 1.0);
        let term2 = tape.mul(one_m_y, lq)?;
        let s = tape.add(term1, term2)?;
        let total = nn::mean_all(&mut tape, s);
        let loss = tape.neg(total);
        let loss_value = tape.scalar(loss)?;
        if !loss_value.is_finite() {
            return Err(CoreError::Numerical("non-finite classifier loss".into()));
        }
        let ids = bindings.ids();
        let grads = tape.grad(loss, &ids)?;
        self.store.absorb_grads(&tape, &bindings, &grads)?;
        opt.step(&mut self.store)?;
        Ok(loss_value)
    }

    fn accuracy(&self, windows: &[&Array2<f64>], labels: &[f64]) -> Result<f64> {
        let mut correct = 0usize;
        for chunk_start in (0..windows.len()).step_by(128) {
            let end = (chunk_start + 128).min(windows.len());
            let mut tape = Tape::new();
            let probs = self.forward(&mut tape, &windows[chunk_start..end])?;
            let v = tape.value(probs);
            for (i, label) in labels[chunk_start..end].iter().enumerate() {
                let pred = if v[(0, i)] >= 0.5 { 1.0 } else { 0.0 };
                if (pred - label).abs() < 0.5 {
                    correct += 1;
                }
            }
        }
        Ok(correct as f64 / windows.len() as f64)
    }
}

/// Train on a shuffled split of (real = 1, synthetic = 0) windows and
/// return held-out accuracy − 0.5.
pub fn discriminative_score(
    real: &[Array2<f64>],
    synth: &[Array2<f64>],
    cfg: &DiscriminatorConfig,
    seed: u64,
) -> Result<f64> {
    if real.len() < 50 || synth.len() < 50 {
        return Err(CoreError::InsufficientData(format!(
            "need ≥ 50 windows per class, got {} real / {} synthetic",
            real.len(),
            synth.len()
        )));
    }
    let ratio = real.len() as f64 / synth.len() as f64;
    if !(0.25..=4.0).contains(&ratio) {
        return Err(CoreError::InvalidData(format!(
            "class imbalance {ratio:.2} exceeds 4:1"
        )));
    }
    if !(0.5..1.0).contains(&cfg.split) {
        return Err(CoreError::Config(format!(
            "split fraction {} outside [0.5, 1)",
            cfg.split
        )));
    }
    let mut pool: Vec<(&Array2<f64>, f64)> = real
        .iter()
        .map(|w| (w, 1.0))
        .chain(synth.iter().map(|w| (w, 0.0)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let cut = ((pool.len() as f64) * cfg.split).round() as usize;
    let (train, held) = pool.split_at(cut.clamp(1, pool.len() - 1));

    let input_dim = real[0].ncols();
    let mut clf = Classifier::new(input_dim, cfg.hidden, seed ^ 0x5eed);
    let train_windows: Vec<&Array2<f64>> = train.iter().map(|(w, _)| *w).collect();
    clf.fit_scaler(&train_windows);
    let mut opt = Optimizer::adam(cfg.learning_rate);
    let mut best_loss = f64::INFINITY;
    let mut stall = 0usize;
    for _epoch in 0..cfg.max_epochs {
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in train.chunks(64) {
            let ws: Vec<&Array2<f64>> = chunk.iter().map(|(w, _)| *w).collect();
            let ls: Vec<f64> = chunk.iter().map(|(_, l)| *l).collect();
            epoch_loss += clf.train_step(&ws, &ls, &mut opt)?;
            batches += 1;
        }
        epoch_loss /= batches as f64;
        if epoch_loss < best_loss - 1e-5 {
            best_loss = epoch_loss;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }
    let held_windows: Vec<&Array2<f64>> = held.iter().map(|(w, _)| *w).collect();
    let held_labels: Vec<f64> = held.iter().map(|(_, l)| *l).collect();
    let acc = clf.accuracy(&held_windows, &held_labels)?;
    Ok(acc - 0.5)
}
