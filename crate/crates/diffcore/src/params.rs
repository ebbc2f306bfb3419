//! Named parameter storage with gradient slots and optimizer moments.

use crate::{DiffError, Result, Tape, TapeBindings, Tensor};
use ndarray::Array2;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
struct Slot {
    value: Tensor,
    grad: Option<Tensor>,
    m: Tensor,
    v: Tensor,
}

/// Named parameter tensors plus gradient slots and adaptive-moment state.
///
/// Iteration order is the sorted name order, so checkpoints and updates
/// are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    slots: BTreeMap<String, Slot>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let dim = value.dim();
        self.slots.insert(
            name.to_string(),
            Slot {
                value,
                grad: None,
                m: Array2::zeros(dim),
                v: Array2::zeros(dim),
            },
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.value)
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn set_grad(&mut self, name: &str, grad: Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))?;
        if grad.dim() != slot.value.dim() {
            return Err(DiffError::GradientShape {
                name: name.to_string(),
                got: format!("{:?}", grad.dim()),
                want: format!("{:?}", slot.value.dim()),
            });
        }
        slot.grad = Some(grad);
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        let slot = self
            .slots
            .get(name)
            .ok_or_else(|| DiffError::UnknownParameter(name.to_string()))?;
        slot.grad
            .as_ref()
            .ok_or_else(|| DiffError::MissingGradient(name.to_string()))
    }

    pub fn clear_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad = None;
        }
    }

    /// Bind every parameter as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> TapeBindings {
        let mut b = TapeBindings::new();
        for (name, slot) in &self.slots {
            let id = tape.leaf(slot.value.clone());
            b.insert(name, id);
        }
        b
    }

    /// Read gradient nodes (produced by `tape.grad` over `bindings.ids()`)
    /// back into the store's gradient slots.
    pub fn absorb_grads(
        &mut self,
        tape: &Tape,
        bindings: &TapeBindings,
        grads: &[crate::NodeId],
    ) -> Result<()> {
        for (name, &g) in bindings.names().iter().zip(grads) {
            let t = tape.value(g).clone();
            self.set_grad(name, t)?;
        }
        Ok(())
    }

    /// Snapshot of all values, for cloning models.
    pub fn values(&self) -> Vec<(String, Tensor)> {
        self.slots
            .iter()
            .map(|(k, s)| (k.clone(), s.value.clone()))
            .collect()
    }
}

/// Parameter update rule. `Sgd` is the plain-gradient mode; `Adam` is the
/// adaptive-moment mode used for task-model training.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            Optimizer::Sgd { lr } => *lr,
            Optimizer::Adam { lr, .. } => *lr,
        }
    }

    /// Apply one update using the gradients currently stored. Errors if any
    /// parameter has no populated gradient.
    pub fn step(&mut self, store: &mut ParameterStore) -> Result<()> {
        for name in store.names() {
            store.grad(&name)?;
        }
        match self {
            Optimizer::Sgd { lr } => {
                let lr = *lr;
                for slot in store.slots.values_mut() {
                    let g = slot.grad.as_ref().expect("checked above");
                    slot.value.zip_mut_with(g, |w, &gi| *w -= lr * gi);
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
            } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for slot in store.slots.values_mut() {
                    let g = slot.grad.as_ref().expect("checked above");
                    slot.m.zip_mut_with(g, |m, &gi| *m = *beta1 * *m + (1.0 - *beta1) * gi);
                    slot.v
                        .zip_mut_with(g, |v, &gi| *v = *beta2 * *v + (1.0 - *beta2) * gi * gi);
                    for ((w, &m), &v) in slot
                        .value
                        .iter_mut()
                        .zip(slot.m.iter())
                        .zip(slot.v.iter())
                    {
                        let mhat = m / bc1;
                        let vhat = v / bc2;
                        *w -= *lr * mhat / (vhat.sqrt() + *eps);
                    }
                }
            }
        }
        Ok(())
    }
}
