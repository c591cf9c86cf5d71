//! Losses, optimizers and the projected training loop.

mod fit;
mod loss;
mod optim;

pub use fit::{
    evaluate, fit, fit_with_snapshot, train_epoch, EarlyStopping, EpochRecord, EpochStats, LrSchedule,
    StopReason, TrainConfig, TrainHistory, Trainer,
};
pub use loss::{cross_entropy, loss_and_grad, targets_for, LossKind};
pub use optim::{adam_step, sgd_step, AdamParams, AdamState, Optimizer, OptimizerKind};
