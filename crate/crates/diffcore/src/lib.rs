//! Minimal reverse-mode automatic differentiation for small forecasting
//! models and policy networks.
//!
//! The engine is an eager tape: every operation computes its value on
//! creation and records enough structure for a later backward pass. The
//! backward pass itself is expressed in terms of the same tape operations,
//! so gradients of gradients (needed when a validation loss is
//! backpropagated through an inner optimizer step) come out of the same
//! machinery with no special casing.
//!
//! Everything is 64-bit; reproducibility outranks speed at this scale.

pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::grad_check;
pub use nn::{concat_cols, mean_all, mse_per_sample, softmax_cols, std_pop};
pub use params::{Optimizer, ParameterStore};
pub use tape::{NodeId, Tape, TapeBindings};

use ndarray::Array2;

/// Dense 2-D tensor of 64-bit floats. Vectors are column matrices (n, 1),
/// scalars are (1, 1).
pub type Tensor = Array2<f64>;

/// Errors raised by tape construction, optimization and checkpointing.
#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("expected scalar (1x1) output, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },
    #[error("gradient not populated for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` gradient shape {got} does not match value shape {want}")]
    GradientShape {
        name: String,
        got: String,
        want: String,
    },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, DiffError>;
