//! Minimal dense-array numerics with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: a [`tensor::Tensor`] is a shape plus a
//! flat row-major buffer, a [`tape::Tape`] is a program over a fixed set of
//! primitives, and [`exec`] evaluates the program forward and backward.
//! Replaying a tape with the same bindings reproduces every recorded value
//! bit-identically, which the robustness experiments rely on for
//! reproducibility.

pub mod exec;
pub(crate) mod kernels;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use exec::{evaluate, finite_difference_check, gradient, Evaluation, GradientReport};
pub use rng::RngStream;
pub use tape::{NodeId, Tape};
pub use tensor::{Precision, Real, Tensor};
