//! Imitation training: targets, losses, and a seeded Adam loop.

pub mod error;
pub mod loss;
pub mod targets;
pub mod train;

pub use error::{Result, TrainError};
pub use loss::{evaluate_loss, imitation_loss, LossReport, LossTerms, LossWeights};
pub use targets::Targets;
pub use train::{batch_gradients, train, train_from, train_on, write_log, LogRow, Shuffler, TrainConfig, TrainOutcome};
