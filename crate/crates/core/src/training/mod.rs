//! Experiment configuration, the windowed-BPTT training loop, checkpoints,
//! and the full-model gradient check.

mod checkpoint;
mod config;
mod gradcheck;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{derive_seed, EvalConfig, ExperimentConfig, TrainConfig, SEED_INIT, SEED_TEST, SEED_TRAIN};
pub use gradcheck::{check_gradients, ModelGradCheck, GRADCHECK_TOLERANCE};
pub use train::{train, LogRow, TrainOutcome, Trainer, WindowReport};
