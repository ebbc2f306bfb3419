//! The manipulation policy: which operations exist, how likely each
//! (transform, mix-up) combination is, and how strong it runs.

use crate::mixups::MixKind;
use crate::transforms::TransformKind;
use crate::{CoreError, Result};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The enabled operation catalog. `mixups` may be empty (transform-only
/// mode, used for the RL-transfer configuration); the policy matrices then
/// keep a single column.
#[derive(Debug, Clone)]
pub struct OperationSet {
    pub transforms: Vec<TransformKind>,
    pub mixups: Vec<MixKind>,
}

impl Default for OperationSet {
    fn default() -> Self {
        Self {
            transforms: TransformKind::ALL.to_vec(),
            mixups: MixKind::ALL.to_vec(),
        }
    }
}

impl OperationSet {
    pub fn transform_only() -> Self {
        Self {
            transforms: TransformKind::ALL.to_vec(),
            mixups: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.transforms.len()
    }

    pub fn m(&self) -> usize {
        self.mixups.len()
    }

    /// Policy matrices always keep at least one column.
    pub fn cols(&self) -> usize {
        self.m().max(1)
    }

    pub fn entries(&self) -> usize {
        self.n() * self.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() {
            return Err(CoreError::Config("operation set needs ≥ 1 transform".into()));
        }
        Ok(())
    }
}

/// Operation-probability matrix p, strength matrix λ and the manipulated
/// proportion α. p sums to one over all entries; λ entries live in [0, 1].
#[derive(Debug, Clone)]
pub struct ManipulationPolicy {
    pub p: Array2<f64>,
    pub lambda: Array2<f64>,
    pub alpha: f64,
}

impl ManipulationPolicy {
    /// Uniform probabilities with a shared strength.
    pub fn uniform(ops: &OperationSet, lambda: f64, alpha: f64) -> Self {
        let (n, cols) = (ops.n(), ops.cols());
        Self {
            p: Array2::from_elem((n, cols), 1.0 / (n * cols) as f64),
            lambda: Array2::from_elem((n, cols), lambda),
            alpha,
        }
    }

    pub fn validate(&self, ops: &OperationSet) -> Result<()> {
        let want = (ops.n(), ops.cols());
        if self.p.dim() != want || self.lambda.dim() != want {
            return Err(CoreError::Config(format!(
                "policy shape {:?}/{:?} does not match operation set {:?}",
                self.p.dim(),
                self.lambda.dim(),
                want
            )));
        }
        if self.p.iter().any(|&v| v < 0.0) {
            return Err(CoreError::Config("policy.p has negative weights".into()));
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CoreError::Config(format!(
                "policy.p sums to {sum}, expected 1 within 1e-6"
            )));
        }
        if self.lambda.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(CoreError::Config("policy.lambda outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CoreError::Config(format!(
                "policy.alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Draw one (transform index, column index) pair from Categorical(p).
    pub fn sample_combo(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let (n, cols) = self.p.dim();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..cols {
                acc += self.p[(i, j)];
                if u < acc {
                    return (i, j);
                }
            }
        }
        (n - 1, cols - 1)
    }

    /// Column means of λ, used when one per-column strength is needed.
    pub fn lambda_col_mean(&self, col: usize) -> f64 {
        let n = self.lambda.nrows() as f64;
        self.lambda.column(col).sum() / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_policy_is_valid() {
        let ops = OperationSet::default();
        let pol = ManipulationPolicy::uniform(&ops, 0.5, 0.3);
        pol.validate(&ops).unwrap();
        assert_eq!(pol.p.dim(), (5, 4));
    }

    #[test]
    fn transform_only_keeps_one_column() {
        let ops = OperationSet::transform_only();
        let pol = ManipulationPolicy::uniform(&ops, 0.5, 1.0);
        pol.validate(&ops).unwrap();
        assert_eq!(pol.p.dim(), (5, 1));
        assert_eq!(ops.m(), 0);
    }

    #[test]
    fn bad_policies_are_rejected() {
        let ops = OperationSet::default();
        let mut pol = ManipulationPolicy::uniform(&ops, 0.5, 0.3);
        pol.p[(0, 0)] += 0.5;
        assert!(pol.validate(&ops).is_err());

        let mut pol = ManipulationPolicy::uniform(&ops, 0.5, 0.3);
        pol.lambda[(1, 1)] = 1.5;
        assert!(pol.validate(&ops).is_err());

        let mut pol = ManipulationPolicy::uniform(&ops, 0.5, 0.3);
        pol.alpha = -0.1;
        assert!(pol.validate(&ops).is_err());
    }

    #[test]
    fn combo_sampling_follows_weights() {
        let ops = OperationSet::default();
        let mut pol = ManipulationPolicy::uniform(&ops, 0.5, 0.3);
        pol.p.fill(0.0);
        pol.p[(2, 3)] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(pol.sample_combo(&mut rng), (2, 3));
        }
    }
}
