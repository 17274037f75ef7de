//! Gradients of the regularized objective, Adam, and the training loop.
//!
//! The objective is `mean task loss + λ · mean Jacobian penalty`, where the
//! penalty comes from the network's [`RegularizerKind`](crate::polynet::RegularizerKind).
//! Its parameter gradient is computed by explicit reverse-mode rules over the
//! cached forward tape; no second-order graph is built.

mod adam;
mod backward;
mod finite_diff;
mod loss;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{
    backward, backward_with_mode, input_gradient, loss_total, task_loss, Batch, JacobianMode, LossValue,
    ParamGrads, Rows,
};
pub use finite_diff::{finite_diff_grad, max_relative_error};
pub use loss::{Labels, LossKind};
pub use train::{train, EpochRecord, TrainConfig, TrainData, TrainReport, TrainStatus};
