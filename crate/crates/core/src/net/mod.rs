//! The three-stage sensing network: generation (30x1x1 to an image-like
//! tensor), a residual feature-learning backbone, and per-task heads.

pub mod config;
pub mod manifest;
mod model;
mod train;

pub use config::{
    BackboneConfig, GenStage, GenerationConfig, NetConfig, Scale, Task, TaskConfig, TaskSelection, TrainConfig, Variant,
};
pub use manifest::Manifest;
pub use model::{build_model, CsiNet, Normalization, INPUT_LEN};
pub use train::{argmax, loss_and_backward, predict, targets_for, train, train_with_optimizer, Predictions, Targets, TrainLog};
