//! Dense tensors, layers with hand-written backward passes, losses and Adam.
//!
//! Everything is generic over [`Scalar`]: `f32` for training and `f64` for
//! finite-difference gradient checks.

mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
mod layer;
pub mod loss;
pub mod ops;
pub mod optim;
mod tensor;

pub use batchnorm::{batchnorm2d, batchnorm2d_backward, BnCache, Mode};
pub use checkpoint::Checkpoint;
pub use conv::{
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward, ConvGeometry,
};
pub use layer::{
    param_count, params_mut, slots, zero_grad, BasicBlock, BatchNorm2d, Conv2d, ConvTranspose2d, Flatten,
    GlobalAvgPool, Layer, Linear, Param, Relu, Resize, Sequential, Slot, Slots,
};
pub use loss::{cross_entropy_loss, joint_loss, l1_loss};
pub use optim::{adam_step, lr_schedule, lr_schedule_with, AdamState, LR_MILESTONES};
pub use tensor::{Scalar, Tensor};
