//! Sequence decision models: a small autodiff tape, the StARformer and DT
//! architectures, training and checkpoints.

mod arch;
mod checkpoint;
mod features;
mod graph;
pub mod gradcheck;
mod loss;
mod mask;
mod optim;
mod params;
mod tensor;
mod train;

pub use arch::{Arch, DecisionModel, ModelConfig, Predictions, StepEncoding, StepInputs, POS_CLASSES, SELECT_CLASSES};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use features::{action_features, card_features, patch_count, patchify, ACTION_FEATURES, CARD_FEATURES};
pub use graph::{attention, Grads, Graph, MaskMode, Var};
pub use loss::{evaluate_windows, head_counts, step_targets, window_loss, HeadCounts, LossWeighting, StepTarget};
pub use mask::{local_mask, MaskMatrix};
pub use optim::{clip_grad_norm, Optimizer, OptimizerConfig};
pub use params::{ParamId, Params};
pub use tensor::{matmul, Tensor};
pub use train::{batch_gradients, train, MetricsLine, TrainConfig, TrainReport, Trainer};

use thiserror::Error;

use crate::trajectory::TrajectoryError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("patch size {0} does not divide the 18 x 32 grid")]
    NonDivisiblePatch(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at step {step}")]
    Divergence { step: u64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint does not match the model config: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}
