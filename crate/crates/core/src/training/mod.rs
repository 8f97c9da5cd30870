//! Optimisation: Adam, the target model and its training loop, and gradient
//! checking.

mod adam;
mod gradcheck;
mod pipeline;
mod target;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport, MIN_SAMPLED_COORDS};
pub use pipeline::{Features, FrozenInputs, TargetModel, TargetParams};
pub use target::{
    default_batch_size, metrics_tsv, predict_dataset, train_target, EpochMetrics, TrainConfig, TrainOutcome,
    CRF_EPOCHS, DEFAULT_LR, SOFTMAX_EPOCHS,
};
