//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records eagerly evaluated ops; [`Tape::backward`] replays their
//! local derivatives in reverse order. Trainable tensors live in a
//! [`ParamStore`] and are borrowed onto each tape without copying.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use params::{Bound, ParamStore, PARAM_FORMAT, PARAM_FORMAT_VERSION};
pub use tape::{sigmoid, softplus, OpKind, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("slice [{start}, {start}+{len}) out of bounds for shape {shape:?}")]
    SliceBounds {
        shape: Vec<usize>,
        start: usize,
        len: usize,
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward already ran on this tape")]
    DoubleBackward,
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
