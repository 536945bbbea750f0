//! Loss, optimizer, clip pipeline and the training loop.

mod adam;
mod checkpoint;
mod config;
mod data;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use data::{clip_samples, make_clips, mix_augment, mix_constituents, mix_one, ClipPair};
pub use loss::{loss, loss_and_grad, LossConfig, LossNorm, LossValue};
pub use trainer::{
    derive_seed, prepare, train, triplet_loss, LogRecord, Prepared, TrainOptions, TrainOutcome, Trainer,
};
