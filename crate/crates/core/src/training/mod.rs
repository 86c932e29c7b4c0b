//! GAN training: losses, optimiser, per-step updates, PAGAN scheduling,
//! checkpoints and the epoch loop.

mod adam;
mod checkpoint;
mod config;
mod losses;
mod pagan;
mod step;
mod trainer;

use std::path::{Path, PathBuf};

pub use adam::{Adam, AdamState};
pub use checkpoint::{checkpoint_file_name, latest_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use losses::{
    class_cross_entropy, discriminator_bce, generator_bce, gradient_penalty, wasserstein_critic, GradientPenalty,
};
pub use pagan::pagan_schedule;
pub use step::{
    discriminator_loss, discriminator_step, gan_step, generator_step, wgan_gp_step, GanPair, StepInfo, StepLosses,
};
pub use trainer::{
    losses_csv, read_losses_csv, train, trajectory_csv, EvalPoint, LossRecord, RunOptions, RunResult, TrainingSet,
    LOSSES_HEADER, SAMPLE_GRID_SIDE, TRAJECTORY_HEADER,
};

use crate::data::DataError;
use crate::imaging::ImagingError;
use crate::metrics::MetricsError;
use crate::models::{ModelError, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite {quantity} at epoch {epoch}, step {step}")]
    NonFinite {
        epoch: usize,
        step: u64,
        quantity: &'static str,
    },
    #[error("output directory {0} is not empty (pass resume to continue a run)")]
    OutputNotEmpty(PathBuf),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint {path} failed integrity check: {reason}")]
    Integrity { path: PathBuf, reason: String },
    #[error("checkpoint was written for {found:?}, expected {expected:?}")]
    SpecMismatch {
        expected: Box<ModelSpec>,
        found: Box<ModelSpec>,
    },
    #[error("log: {0}")]
    Log(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
