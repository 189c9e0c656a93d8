//! Dense reverse-mode automatic differentiation over `f64` tensors.
//!
//! A [`Graph`] records every operation with its output value; [`Graph::backward`]
//! walks the record in reverse. Shapes are explicit: the only broadcast is the
//! bias add inside [`Graph::linear`] and [`Graph::conv2d`].
//!
//! Kink convention for piecewise ops: `relu'(0) = 0`, the tent derivative is
//! `0` at `d = 0` and `|d| = 1`, the clamp derivative is `0` at both ends, and
//! max sends its gradient to the lowest tied index.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use graph::{
    clamp01, clamp01_deriv, clamp01_kink, sigmoid, tent, tent_deriv, tent_kink, CustomOp, Gradients, Graph, NodeId,
    Pointwise, Reduction,
};
pub use params::{adam_step, AdamConfig, Param, ParamStore};
pub use tensor::Tensor;
