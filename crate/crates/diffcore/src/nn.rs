//! Composable network pieces on top of the tape: dense layers, a gated
//! recurrent cell, softmax, and the reductions used by the losses.
//!
//! Parameters live in a [`ParameterStore`]; each builder takes the name
//! prefix it owns. Batches are laid out with samples as columns.

use crate::{NodeId, ParameterStore, Result, Tape, TapeBindings, Tensor};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, the usual default for
/// small dense/recurrent layers.
pub fn init_dense(
    store: &mut ParameterStore,
    prefix: &str,
    out_dim: usize,
    in_dim: usize,
    rng: &mut ChaCha8Rng,
) {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound));
    store.insert(&format!("{prefix}.w"), w);
    store.insert(&format!("{prefix}.b"), Array2::zeros((out_dim, 1)));
}

/// Dense layer with zero-initialized weights and biases. A zero head gives
/// exactly uniform softmax outputs and sigmoid outputs of 0.5.
pub fn init_dense_zero(store: &mut ParameterStore, prefix: &str, out_dim: usize, in_dim: usize) {
    store.insert(&format!("{prefix}.w"), Array2::zeros((out_dim, in_dim)));
    store.insert(&format!("{prefix}.b"), Array2::zeros((out_dim, 1)));
}

/// y = W x + b with the bias broadcast across the batch columns.
pub fn dense(
    tape: &mut Tape,
    bindings: &TapeBindings,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let w = bindings.get(&format!("{prefix}.w"))?;
    let b = bindings.get(&format!("{prefix}.b"))?;
    let wx = tape.matmul(w, x)?;
    let cols = tape.value(wx).ncols();
    let bb = tape.broadcast_cols(b, cols)?;
    tape.add(wx, bb)
}

/// Gated recurrent cell parameters: update gate z, reset gate r, candidate n.
pub fn init_gru(
    store: &mut ParameterStore,
    prefix: &str,
    hidden: usize,
    input: usize,
    rng: &mut ChaCha8Rng,
) {
    for gate in ["z", "r", "n"] {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w = Array2::from_shape_fn((hidden, input), |_| rng.random_range(-bound..bound));
        let u = Array2::from_shape_fn((hidden, hidden), |_| rng.random_range(-bound..bound));
        store.insert(&format!("{prefix}.w{gate}"), w);
        store.insert(&format!("{prefix}.u{gate}"), u);
        store.insert(&format!("{prefix}.b{gate}"), Array2::zeros((hidden, 1)));
    }
}

/// One step of the gated recurrent cell.
///
/// z = σ(Wz x + Uz h + bz), r = σ(Wr x + Ur h + br),
/// n = tanh(Wn x + Un (r ⊙ h) + bn), h' = (1 − z) ⊙ h + z ⊙ n.
pub fn gru_step(
    tape: &mut Tape,
    bindings: &TapeBindings,
    prefix: &str,
    x: NodeId,
    h: NodeId,
) -> Result<NodeId> {
    let cols = tape.value(x).ncols();
    let gate = |tape: &mut Tape, g: &str, x: NodeId, hin: NodeId| -> Result<NodeId> {
        let w = bindings.get(&format!("{prefix}.w{g}"))?;
        let u = bindings.get(&format!("{prefix}.u{g}"))?;
        let b = bindings.get(&format!("{prefix}.b{g}"))?;
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, hin)?;
        let s = tape.add(wx, uh)?;
        let bb = tape.broadcast_cols(b, cols)?;
        tape.add(s, bb)
    };
    let z_pre = gate(tape, "z", x, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, "r", x, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let n_pre = gate(tape, "n", x, rh)?;
    let n = tape.tanh(n_pre);
    let nz = tape.neg(z);
    let one_m_z = tape.add_scalar(nz, 1.0);
    let keep = tape.mul(one_m_z, h)?;
    let new = tape.mul(z, n)?;
    tape.add(keep, new)
}

/// Run the cell over a sequence of (input_dim, batch) steps, returning the
/// final hidden state (hidden, batch).
pub fn gru_sequence(
    tape: &mut Tape,
    bindings: &TapeBindings,
    prefix: &str,
    steps: &[NodeId],
    hidden: usize,
) -> Result<NodeId> {
    let batch = tape.value(steps[0]).ncols();
    let mut h = tape.constant(Array2::zeros((hidden, batch)));
    for &x in steps {
        h = gru_step(tape, bindings, prefix, x, h)?;
    }
    Ok(h)
}

/// Column-wise softmax (each column sums to one). The max shift only
/// stabilizes the exponentials; it does not change the function.
pub fn softmax_cols(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let shift = tape
        .value(x)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = tape.add_scalar(x, -shift);
    let e = tape.exp(shifted);
    let denom = tape.sum_rows(e);
    let rows = tape.value(x).nrows();
    let denom_b = tape.broadcast_rows(denom, rows)?;
    tape.div(e, denom_b)
}

/// Mean over all entries, a 1x1 node.
pub fn mean_all(tape: &mut Tape, x: NodeId) -> NodeId {
    let n = tape.value(x).len() as f64;
    let s = tape.sum_all(x);
    tape.mul_scalar(s, 1.0 / n)
}

/// Population standard deviation over all entries, a 1x1 node.
/// At zero variance the gradient is 0 (sqrt subgradient convention).
pub fn std_pop(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let (m, n) = {
        let v = tape.value(x);
        (v.nrows(), v.ncols())
    };
    let mu = mean_all(tape, x);
    let mu_b = tape.broadcast_all(mu, m, n)?;
    let dev = tape.sub(x, mu_b)?;
    let sq = tape.mul(dev, dev)?;
    let var = mean_all(tape, sq);
    Ok(tape.sqrt(var))
}

/// Per-sample squared errors: predictions and targets are (1, batch); the
/// result is (1, batch).
pub fn mse_per_sample(tape: &mut Tape, pred: NodeId, target: NodeId) -> Result<NodeId> {
    let diff = tape.sub(pred, target)?;
    tape.mul(diff, diff)
}

/// Stack column vectors side by side into (rows, len) via transposition.
pub fn concat_cols(tape: &mut Tape, cols: &[NodeId]) -> Result<NodeId> {
    let rows: Vec<NodeId> = cols.iter().map(|&c| tape.transpose(c)).collect();
    let stacked = tape.concat_rows(&rows)?;
    Ok(tape.transpose(stacked))
}

/// Instance normalization of a (time, features) window: each feature column
/// is centered and scaled by sqrt(var + eps) over the window. Keeps
/// recurrent activations in range regardless of the raw price level.
pub fn instance_norm_window(tape: &mut Tape, window: NodeId, eps: f64) -> Result<NodeId> {
    let (rows, cols) = {
        let v = tape.value(window);
        (v.nrows(), v.ncols())
    };
    let col_sum = tape.sum_rows(window); // (1, F)
    let mu = tape.mul_scalar(col_sum, 1.0 / rows as f64);
    let mu_b = tape.broadcast_rows(mu, rows)?;
    let dev = tape.sub(window, mu_b)?;
    let sq = tape.mul(dev, dev)?;
    let var_sum = tape.sum_rows(sq);
    let var = tape.mul_scalar(var_sum, 1.0 / rows as f64);
    let var_eps = tape.add_scalar(var, eps);
    let sd = tape.sqrt(var_eps);
    let sd_b = tape.broadcast_rows(sd, rows)?;
    let _ = cols;
    tape.div(dev, sd_b)
}

/// Plain-f64 convenience used by inference paths and tests.
pub fn tensor_from_vec(v: &[f64]) -> Tensor {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn softmax_columns_sum_to_one() {
        let mut t = Tape::new();
        let x = t.leaf(array![[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0]]);
        let s = softmax_cols(&mut t, x).unwrap();
        let v = t.value(s);
        for j in 0..2 {
            let sum: f64 = (0..3).map(|i| v[(i, j)]).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_logits_give_uniform_softmax() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::zeros((4, 1)));
        let s = softmax_cols(&mut t, x).unwrap();
        for &v in t.value(s).iter() {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn std_pop_matches_hand_value() {
        // [0, 2]: mean 1, population std 1
        let mut t = Tape::new();
        let x = t.leaf(array![[0.0, 2.0]]);
        let s = std_pop(&mut t, x).unwrap();
        assert_abs_diff_eq!(t.scalar(s).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gru_step_shapes_and_determinism() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        init_gru(&mut store, "cell", 4, 3, &mut rng);
        let run = || {
            let mut t = Tape::new();
            let b = store.bind(&mut t);
            let x = t.constant(array![[0.1], [0.2], [0.3]]);
            let h = t.constant(Array2::zeros((4, 1)));
            let h1 = gru_step(&mut t, &b, "cell", x, h).unwrap();
            t.value(h1).clone()
        };
        let out = run();
        assert_eq!(out.dim(), (4, 1));
        assert_eq!(out, run());
    }

    #[test]
    fn instance_norm_centers_and_scales() {
        let mut t = Tape::new();
        let w = t.constant(array![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]);
        let z = instance_norm_window(&mut t, w, 0.0).unwrap();
        let v = t.value(z);
        for j in 0..2 {
            let mean: f64 = (0..3).map(|i| v[(i, j)]).sum::<f64>() / 3.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        }
        // identical z-profile for proportional columns
        assert_abs_diff_eq!(v[(0, 0)], v[(0, 1)], epsilon = 1e-12);
    }

    #[test]
    fn concat_cols_roundtrip() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0], [2.0]]);
        let b = t.constant(array![[3.0], [4.0]]);
        let m = concat_cols(&mut t, &[a, b]).unwrap();
        assert_eq!(t.value(m), &array![[1.0, 3.0], [2.0, 4.0]]);
    }
}
