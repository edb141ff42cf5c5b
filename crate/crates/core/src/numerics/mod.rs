//! Dense numeric substrate: matrices, kernels, loss, optimizer, gradient
//! checking.
//!
//! Everything here is deterministic by construction — loops run in fixed
//! order, reductions accumulate left to right — so repeated runs with the
//! same inputs are bit-identical.

mod adam;
mod fdcheck;
mod kernels;
mod loss;
mod matrix;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use fdcheck::{finite_difference_check, FdProbe, FdReport, GRADIENT_FLOOR};
pub use kernels::{
    dropout_mask, elu, elu_backward, leaky_relu, relu, segment_softmax, tanh_elementwise,
};
pub use loss::cross_entropy_with_logits;
pub use matrix::Matrix;
pub use params::{Param, ParameterStore};
