//! Projection head, ablation MLP, losses, optimizer and the trainer state.

pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod state;

pub use layers::{MlpAttributeEncoder, MlpGradients, ProjectionHead};
pub use loss::{cross_entropy_loss, positive_weights, softmax, weighted_bce_loss, DEFAULT_LOGIT_SCALE};
pub use model::{
    attribute_batch, backward_through_kernel, kernel_forward, zsc_batch, BatchLoss, ClassTargets, Gradients, Parameters,
};
pub use optim::{cosine_lr, AdamW, AdamWConfig, CosineSchedule, ParamSlot};
pub use state::TrainState;
