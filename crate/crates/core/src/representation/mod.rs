//! Encoder, losses, optimizer and the alternating training step.

pub mod augment;
pub mod encoder;
pub mod kmeans;
pub mod loss;
pub mod optim;
pub mod train;

pub use augment::{augment, AugmentDraw, AugmentationSpec};
pub use encoder::{Encoder, ForwardCache};
pub use kmeans::{kmeans, kmeans_init};
pub use loss::{
    alignment_loss, alignment_loss_domain, pair_alignment_loss, queue_assignments, swav_assignments,
    swav_loss_domain, LossGrad, PairLossGrad,
};
pub use optim::{lr_schedule, Momentum};
pub use train::{
    batch_columns, full_correspondence, training_step, AlignmentMode, AssignmentScope, CorrespondenceRefresh, StepDiagnostics,
    TrainState, TrainingConfig, TrainingSetup, PHOTO, SKETCH,
};
