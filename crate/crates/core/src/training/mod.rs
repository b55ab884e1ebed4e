//! Clip-wise training: label assignment, losses, augmentation and the optimizer loop.

pub mod assign;
pub mod audit;
pub mod augment;
pub mod clip;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use assign::{assign_labels, Assignment, LossConfig, RowPrediction};
pub use audit::{gradient_audit, GradientAudit};
pub use augment::{augment_clip, FrameDirective};
pub use clip::{run_clip, ClipRun, TrainFrame};
pub use loss::{compute_loss, ClipLoss, FrameOutputs, FrameTargets, LossParts};
pub use optim::{AdamW, LrSchedule};
pub use trainer::{
    train, write_loss_curve, EpochSummary, LossRecord, TrainConfig, TrainReport, TrainSequence,
};
