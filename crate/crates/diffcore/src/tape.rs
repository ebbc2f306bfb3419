//! The eager tape: values are computed when nodes are created, and the
//! backward pass appends ordinary nodes, which makes higher-order
//! gradients (gradient-of-gradient) work without extra machinery.

use crate::{DiffError, Result, Tensor};
use ndarray::Array2;
use std::collections::HashMap;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Input tensor; parameters are differentiable, plain data is not.
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// a / b with the convention 0/0 := 0 wherever b == 0. Used for
    /// subgradient choices such as d sqrt(0) := 0.
    GuardDiv(NodeId, NodeId),
    Neg(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, f64),
    SumAll(NodeId),
    SumCols(NodeId),
    SumRows(NodeId),
    BroadcastCols(NodeId),
    BroadcastRows(NodeId),
    BroadcastAll(NodeId),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    PadRows(NodeId, usize),
    Reshape(NodeId),
    /// Identity forward, zero backward.
    Detach,
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Eager computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Name → node map for parameters bound onto a tape.
#[derive(Debug, Clone, Default)]
pub struct TapeBindings {
    map: HashMap<String, NodeId>,
    order: Vec<String>,
}

impl TapeBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, id: NodeId) {
        if self.map.insert(name.to_string(), id).is_none() {
            self.order.push(name.to_string());
        }
    }

    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))
    }

    /// Names in insertion order.
    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.order.iter().map(|n| self.map[n]).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.dim() != (1, 1) {
            return Err(DiffError::NonScalarOutput {
                rows: v.nrows(),
                cols: v.ncols(),
            });
        }
        Ok(v[(0, 0)])
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let needs_grad = match &op {
            Op::Leaf | Op::Detach => false,
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::GuardDiv(a, b)
            | Op::MatMul(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Neg(a)
            | Op::Transpose(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::SumAll(a)
            | Op::SumCols(a)
            | Op::SumRows(a)
            | Op::BroadcastCols(a)
            | Op::BroadcastRows(a)
            | Op::BroadcastAll(a)
            | Op::SliceRows(a, _, _)
            | Op::PadRows(a, _)
            | Op::Reshape(a) => self.nodes[a.0].needs_grad,
            Op::ConcatRows(parts) => parts.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-differentiable input (plain data).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Array2::from_elem((1, 1), v))
    }

    fn require_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(DiffError::ShapeMismatch {
                op,
                details: format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("add", a, b)?;
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("sub", a, b)?;
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("mul", a, b)?;
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("div", a, b)?;
        let v = &self.nodes[a.0].value / &self.nodes[b.0].value;
        Ok(self.push(v, Op::Div(a, b)))
    }

    /// Elementwise a/b, defined as 0 wherever b == 0.
    pub fn guard_div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("guard_div", a, b)?;
        let mut v = self.nodes[a.0].value.clone();
        v.zip_mut_with(&self.nodes[b.0].value, |x, &d| {
            *x = if d == 0.0 { 0.0 } else { *x / d };
        });
        Ok(self.push(v, Op::GuardDiv(a, b)))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                details: format!("({ar},{ac}) x ({br},{bc})"),
            });
        }
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    /// Square root with subgradient 0 at 0.
    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| x * s);
        self.push(v, Op::MulScalar(a, s))
    }

    /// Sum of all entries, a 1x1 result.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        self.push(v, Op::SumAll(a))
    }

    /// Row-wise sum: (m, n) → (m, 1).
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.0].value;
        let m = src.nrows();
        let mut v = Array2::zeros((m, 1));
        for (i, row) in src.rows().into_iter().enumerate() {
            v[(i, 0)] = row.sum();
        }
        self.push(v, Op::SumCols(a))
    }

    /// Column-wise sum: (m, n) → (1, n).
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.0].value;
        let n = src.ncols();
        let mut v = Array2::zeros((1, n));
        for (j, col) in src.columns().into_iter().enumerate() {
            v[(0, j)] = col.sum();
        }
        self.push(v, Op::SumRows(a))
    }

    /// Repeat a column vector (m, 1) across n columns.
    pub fn broadcast_cols(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let (m, c) = self.shape(a);
        if c != 1 {
            return Err(DiffError::ShapeMismatch {
                op: "broadcast_cols",
                details: format!("expected (m,1), got ({m},{c})"),
            });
        }
        let src = &self.nodes[a.0].value;
        let mut v = Array2::zeros((m, n));
        for i in 0..m {
            for j in 0..n {
                v[(i, j)] = src[(i, 0)];
            }
        }
        Ok(self.push(v, Op::BroadcastCols(a)))
    }

    /// Repeat a row vector (1, n) across m rows.
    pub fn broadcast_rows(&mut self, a: NodeId, m: usize) -> Result<NodeId> {
        let (r, n) = self.shape(a);
        if r != 1 {
            return Err(DiffError::ShapeMismatch {
                op: "broadcast_rows",
                details: format!("expected (1,n), got ({r},{n})"),
            });
        }
        let src = &self.nodes[a.0].value;
        let mut v = Array2::zeros((m, n));
        for i in 0..m {
            for j in 0..n {
                v[(i, j)] = src[(0, j)];
            }
        }
        Ok(self.push(v, Op::BroadcastRows(a)))
    }

    /// Repeat a scalar (1, 1) to an (m, n) matrix.
    pub fn broadcast_all(&mut self, a: NodeId, m: usize, n: usize) -> Result<NodeId> {
        let s = self.scalar(a)?;
        Ok(self.push(Array2::from_elem((m, n), s), Op::BroadcastAll(a)))
    }

    /// Stack blocks vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(DiffError::ShapeMismatch {
                op: "concat_rows",
                details: "empty part list".into(),
            });
        }
        let n = self.shape(parts[0]).1;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != n {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_rows",
                    details: format!("column counts differ: {c} vs {n}"),
                });
            }
            rows += r;
        }
        let mut v = Array2::zeros((rows, n));
        let mut at = 0;
        for &p in parts {
            let src = &self.nodes[p.0].value;
            for i in 0..src.nrows() {
                for j in 0..n {
                    v[(at + i, j)] = src[(i, j)];
                }
            }
            at += src.nrows();
        }
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start .. start+len`.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.shape(a);
        if start + len > m {
            return Err(DiffError::ShapeMismatch {
                op: "slice_rows",
                details: format!("slice {start}+{len} out of {m} rows"),
            });
        }
        let src = &self.nodes[a.0].value;
        let mut v = Array2::zeros((len, n));
        for i in 0..len {
            for j in 0..n {
                v[(i, j)] = src[(start + i, j)];
            }
        }
        Ok(self.push(v, Op::SliceRows(a, start, len)))
    }

    /// Zero-pad with `before`/`after` rows.
    pub fn pad_rows(&mut self, a: NodeId, before: usize, after: usize) -> NodeId {
        let (m, n) = self.shape(a);
        let mut v = Array2::zeros((before + m + after, n));
        let src = &self.nodes[a.0].value;
        for i in 0..m {
            for j in 0..n {
                v[(before + i, j)] = src[(i, j)];
            }
        }
        self.push(v, Op::PadRows(a, before))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let (m, n) = self.shape(a);
        if m * n != rows * cols {
            return Err(DiffError::ShapeMismatch {
                op: "reshape",
                details: format!("({m},{n}) → ({rows},{cols})"),
            });
        }
        let flat: Vec<f64> = self.nodes[a.0].value.iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("sizes checked");
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Identity in the forward pass, blocks gradients in the backward pass.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.clone();
        let _ = a;
        self.push(v, Op::Detach)
    }

    fn zeros_like(&mut self, id: NodeId) -> NodeId {
        let (m, n) = self.shape(id);
        self.constant(Array2::zeros((m, n)))
    }

    /// Reverse-mode gradients of a scalar node `y` with respect to `wrt`.
    ///
    /// Appends adjoint nodes to the tape and returns one gradient node per
    /// requested id (zeros when `y` does not depend on it). Because the
    /// adjoints are themselves tape nodes, `grad` may be called again on
    /// any scalar function of the returned nodes.
    pub fn grad(&mut self, y: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        {
            let v = self.value(y);
            if v.dim() != (1, 1) {
                return Err(DiffError::NonScalarOutput {
                    rows: v.nrows(),
                    cols: v.ncols(),
                });
            }
        }
        let seed = self.constant(Array2::from_elem((1, 1), 1.0));
        self.grad_seeded(y, seed, wrt)
    }

    /// Like [`Tape::grad`] with an explicit upstream gradient for `y`.
    pub fn grad_seeded(&mut self, y: NodeId, seed: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if self.shape(y) != self.shape(seed) {
            return Err(DiffError::ShapeMismatch {
                op: "grad_seeded",
                details: format!("{:?} vs {:?}", self.shape(y), self.shape(seed)),
            });
        }
        let mut adjoint: HashMap<usize, NodeId> = HashMap::new();
        adjoint.insert(y.0, seed);
        // New nodes appended during backward always have indices larger
        // than the node being processed, so a single reverse sweep visits
        // every dependency.
        let mut idx = y.0 + 1;
        while idx > 0 {
            idx -= 1;
            let Some(&g) = adjoint.get(&idx) else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            let node = NodeId(idx);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoint, a, g)?;
                    self.accumulate(&mut adjoint, b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoint, a, g)?;
                    let gn = self.neg(g);
                    self.accumulate(&mut adjoint, b, gn)?;
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let gb = self.mul(g, a)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Div(a, b) => {
                    let ga = self.div(g, b)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let num = self.mul(g, a)?;
                    let bb = self.mul(b, b)?;
                    let q = self.div(num, bb)?;
                    let gb = self.neg(q);
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::GuardDiv(a, b) => {
                    let ga = self.guard_div(g, b)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let num = self.mul(g, a)?;
                    let bb = self.mul(b, b)?;
                    let q = self.guard_div(num, bb)?;
                    let gb = self.neg(q);
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Neg(a) => {
                    let ga = self.neg(g);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b);
                    let ga = self.matmul(g, bt)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let at = self.transpose(a);
                    let gb = self.matmul(at, g)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Exp(a) => {
                    let ga = self.mul(g, node)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Ln(a) => {
                    let ga = self.div(g, a)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Sqrt(a) => {
                    // d sqrt = 1/(2 sqrt); 0 at 0 by the guard convention.
                    let two_y = self.mul_scalar(node, 2.0);
                    let ga = self.guard_div(g, two_y)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Tanh(a) => {
                    let yy = self.mul(node, node)?;
                    let nyy = self.neg(yy);
                    let one_m = self.add_scalar(nyy, 1.0);
                    let ga = self.mul(g, one_m)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let ny = self.neg(node);
                    let one_m = self.add_scalar(ny, 1.0);
                    let yy = self.mul(node, one_m)?;
                    let ga = self.mul(g, yy)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::AddScalar(a) => {
                    self.accumulate(&mut adjoint, a, g)?;
                }
                Op::MulScalar(a, s) => {
                    let ga = self.mul_scalar(g, s);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumAll(a) => {
                    let (m, n) = self.shape(a);
                    let ga = self.broadcast_all(g, m, n)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumCols(a) => {
                    let (_, n) = self.shape(a);
                    let ga = self.broadcast_cols(g, n)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumRows(a) => {
                    let (m, _) = self.shape(a);
                    let ga = self.broadcast_rows(g, m)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastCols(a) => {
                    let ga = self.sum_cols(g);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastRows(a) => {
                    let ga = self.sum_rows(g);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastAll(a) => {
                    let ga = self.sum_all(g);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let rows = self.shape(p).0;
                        let gp = self.slice_rows(g, at, rows)?;
                        self.accumulate(&mut adjoint, p, gp)?;
                        at += rows;
                    }
                }
                Op::SliceRows(a, start, len) => {
                    let (m, _) = self.shape(a);
                    let ga = self.pad_rows(g, start, m - start - len);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::PadRows(a, before) => {
                    let (m, _) = self.shape(a);
                    let ga = self.slice_rows(g, before, m)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Reshape(a) => {
                    let (m, n) = self.shape(a);
                    let ga = self.reshape(g, m, n)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Detach => {}
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| adjoint.get(&w.0).copied().unwrap_or_else(|| self.zeros_like(w)))
            .collect())
    }

    fn accumulate(
        &mut self,
        adjoint: &mut HashMap<usize, NodeId>,
        target: NodeId,
        contrib: NodeId,
    ) -> Result<()> {
        // Constant subtrees never receive adjoints.
        if !self.nodes[target.0].needs_grad {
            return Ok(());
        }
        match adjoint.get(&target.0) {
            Some(&existing) => {
                let sum = self.add(existing, contrib)?;
                adjoint.insert(target.0, sum);
            }
            None => {
                adjoint.insert(target.0, contrib);
            }
        }
        Ok(())
    }
}
