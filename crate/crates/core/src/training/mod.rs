//! Loss, optimizer and the epoch loop.

mod adam;
mod epoch;
mod log;
mod loss;

pub use adam::AdamState;
pub use epoch::{
    evaluate_slices, evaluate_split, fit, make_batch, train_epoch, train_step, EpochStats, TrainOptions,
};
pub use log::{EpochRecord, TrainLog, TRAIN_LOG_HEADER};
pub use loss::{cross_entropy_loss, one_hot, CLAMP};
