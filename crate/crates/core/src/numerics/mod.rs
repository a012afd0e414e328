//! Dense tensors, reverse-mode differentiation, and optimization.

mod adam;
mod gradcheck;
mod graph;
mod prob;
mod random;
mod scalar;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use graph::{Axis, Gradients, Graph, Node, Op, Var};
pub use prob::{cross_entropy, softmax, LOG_EPS};
pub use random::{sample_gaussian, sample_uniform};
pub use scalar::Real;
pub use tensor::Tensor;
