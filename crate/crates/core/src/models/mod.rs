//! Generator and discriminator networks for every family and discriminator
//! variant of the ablation grid.
//!
//! The networks are written functionally on top of `tch` tensors: parameters
//! live in a [`ParamStore`] and every forward pass is an explicit sequence of
//! conv / batch-norm / activation calls. All initialization and dropout draws
//! come from caller-supplied ChaCha streams so runs are reproducible.

mod discriminator;
mod generator;
mod layers;
mod params;
mod spec;
mod spectral;

use thiserror::Error;

pub use discriminator::{build_discriminator, pagan_augment_input, DiscOutput, Discriminator, DROPOUT_P};
pub use generator::{build_generator, Generator};
pub use params::{ParamStore, TensorData};
pub use spec::{DiscVariant, Family, ModelSpec, PAGAN_LEVEL_CAP};
pub use spectral::{spectral_normalize, SIGMA_FLOOR};

/// Standard deviation of the DCGAN-style weight initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("PAGAN level {level} is outside 0..={max}")]
    PaganLevel { level: usize, max: usize },
    #[error("class labels are required by {0} models")]
    MissingLabels(Family),
    #[error("input shape {got:?} does not match the expected {expected}")]
    Shape { got: Vec<i64>, expected: String },
    #[error("parameter `{0}` is missing or has the wrong shape")]
    Parameter(String),
    #[error("spectral normalization needs at least one power iteration")]
    NoIterations,
}
