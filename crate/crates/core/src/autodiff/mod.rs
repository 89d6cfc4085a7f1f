//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records primitive applications; parameters live in a
//! [`ParamStore`] and are placed on the tape as leaves for each pass.
//! [`Tape::backward`] produces per-node gradients which [`GradientMap`]
//! re-keys by parameter.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheck};
pub use params::{GradientMap, ParamId, ParamStore, Parameter};
pub use tape::{Activation, Gradients, Tape, Var, PROB_FLOOR};
pub use tensor::Tensor;
