//! Dense tensors and a tape-based reverse-mode differentiator.
//!
//! Every model in the crate builds its forward pass out of [`Var`] operations
//! recorded on a [`Tape`]. Parameters live in a [`ParamSet`] and are bound to a
//! tape as leaves; [`Tape::backward`] returns [`Gradients`] that are then
//! accumulated into the parameter set.

mod dense;
mod gradcheck;
mod param;
mod tape;

pub use dense::{Real, Tensor};
pub use gradcheck::{grad_check, GradCheckReport};
pub use param::{ParamId, ParamSet, Parameter};
pub use tape::{sigmoid, Bound, Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}
