//! Generative-model metrics (FID, KID, IS) over a pluggable feature space.
//!
//! Features are `n × d` `f64` matrices, one row per image. All linear algebra
//! is done in double precision with nalgebra.

mod extractor;
mod kernel;
mod stats;

use nalgebra::DMatrix;
use thiserror::Error;

pub use extractor::{extract_features, FeatureExtractor, StubExtractor, TorchScriptExtractor, STUB_CLASSES, STUB_DIM};
pub use kernel::{inception_score, kid};
pub use stats::{fid, fid_from_features, fid_report, fit_gaussian, matrix_sqrt_psd, FeatureStats, FidReport};

use crate::imaging::ImageBatch;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("row {row} is not a probability vector")]
    InvalidProbabilities { row: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("feature extractor `{name}`: {message}")]
    Extractor { name: String, message: String },
}

/// FID and KID of one generated batch against one real batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub fid: f64,
    pub kid: f64,
}

/// Scores `fake` against `real` in the extractor's feature space.
pub fn score_batches(
    real: &ImageBatch,
    fake: &ImageBatch,
    extractor: &dyn FeatureExtractor,
) -> Result<Scores, MetricsError> {
    let fr = extract_features(real, extractor)?;
    let ff = extract_features(fake, extractor)?;
    score_features(&fr, &ff)
}

pub fn score_features(real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<Scores, MetricsError> {
    Ok(Scores {
        fid: fid_from_features(real, fake)?,
        kid: kid(real, fake)?,
    })
}
