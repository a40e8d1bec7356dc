//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Scope is exactly what the encoder and losses need: 2-D matrix primitives,
//! a per-forward-pass tape, gradient accumulation with explicit zeroing, and
//! a finite-difference checker for verification.

mod gradcheck;
mod graph;
mod kernels;
pub mod ops;
mod tensor;

pub use gradcheck::{finite_difference_check, rel_err, FdEntry, FdReport};
pub use graph::{backward_all, clear_graph, graph_len, grad_enabled, no_grad};
pub use tensor::Tensor;
