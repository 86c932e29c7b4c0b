//! Affective image corpus: manifest ingestion, rating normalization and
//! valence–arousal labelling.

mod circumplex;
mod config;
mod dataset;
mod fixture;
mod report;
mod scale;
mod split;

use std::path::PathBuf;

use thiserror::Error;

pub use circumplex::{
    assign_category, assign_quadrant, CategoryMap, Quadrant, NEUTRAL, SECTOR_COUNT, SECTOR_WIDTH_DEG,
};
pub use config::{default_scales, DataConfig};
pub use dataset::{build_dataset, AffectiveDataset, AffectiveRecord, MANIFEST_HEADER};
pub use fixture::{synth_category_fixture, synth_fixture, FixtureOptions, SYNTHETIC_SOURCE};
pub use report::{
    category_csv, category_markdown, dataset_report_markdown, quadrant_csv, quadrant_markdown, quadrant_rows,
    CATEGORY_HEADER, QUADRANT_HEADER,
};
pub use scale::{normalize_rating, RatingScale, SourceScales};
pub use split::split;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },
    #[error("rating {value} of `{record}` outside scale [{min}, {max}]")]
    RatingOutOfRange {
        record: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid category map: {0}")]
    InvalidCategoryMap(String),
    #[error("unknown source `{source_id}` in {manifest}:{line}")]
    UnknownSource {
        source_id: String,
        manifest: PathBuf,
        line: u64,
    },
    #[error("duplicate image path `{}`", .0.display())]
    DuplicatePath(PathBuf),
    #[error("{} image file(s) missing: {}", .0.len(), display_paths(.0))]
    MissingImages(Vec<PathBuf>),
    #[error("train fraction {0} not in (0, 1)")]
    InvalidFraction(f64),
    #[error("fixture size must be positive")]
    EmptyFixture,
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub(crate) fn display_paths(paths: &[PathBuf]) -> String {
    const SHOWN: usize = 20;
    let mut out: Vec<String> = paths.iter().take(SHOWN).map(|p| p.display().to_string()).collect();
    if paths.len() > SHOWN {
        out.push(format!("... and {} more", paths.len() - SHOWN));
    }
    out.join(", ")
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}
