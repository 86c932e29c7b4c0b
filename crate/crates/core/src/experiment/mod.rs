//! Experiment plumbing: config files, dataset cells, the model × dataset
//! grid, score tables and reports.

mod config;
mod datasets;
mod grid;
mod plot;
mod report;

use std::path::{Path, PathBuf};

pub use config::{
    default_models, parse_model_id, CellOverride, ClassifySection, DatasetEntry, ExperimentConfig, GridConfig,
    MetricsConfig, ModelOverrides, FORMAT_VERSION,
};
pub use datasets::{affective_dataset, load_dataset, scan_image_dir, LoadedDataset};
pub use grid::{
    plan_grid, read_json, repeat_seed, run_cell, run_dirs, run_grid, run_single, CellStatus, GridCell, GridOptions, RunManifest,
    ScoreRow, ScoreTable, ERROR_FILE, MANIFEST_FILE, RESULT_FILE, SCORE_HEADER,
};
pub use plot::{bar_chart, line_chart, load_font, Series};
pub use report::{collect_results, write_report, CellRecord, ReportSummary, BAR_HEADER, CURVE_HEADER};

use crate::classify::{fine_tune, results_csv, ClassifierResult, ClassifyError};
use crate::data::DataError;
use crate::imaging::ImagingError;
use crate::metrics::MetricsError;
use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("dataset `{id}`: {message}")]
    Dataset { id: String, message: String },
    #[error("no run results under {0}")]
    NoResults(PathBuf),
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("output directory {0} is not empty (use --resume to continue)")]
    OutputNotEmpty(PathBuf),
    #[error("panic: {0}")]
    Panic(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Creates `dir`, refusing a non-empty one unless resuming.
pub fn prepare_output_dir(dir: &Path, resume: bool) -> Result<(), ExperimentError> {
    if !resume && dir.read_dir().is_ok_and(|mut d| d.next().is_some()) {
        return Err(ExperimentError::OutputNotEmpty(dir.to_path_buf()));
    }
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))
}

/// Writes the fully resolved config next to the outputs.
pub fn echo_config(config: &ExperimentConfig, dir: &Path) -> Result<(), ExperimentError> {
    let path = dir.join("config.resolved.toml");
    std::fs::write(&path, config.to_toml()).map_err(|e| ExperimentError::io(&path, e))
}

/// Fine-tunes every configured backbone on every affective dataset cell and
/// writes `classification.csv` (plus one JSON per pair) to `out`.
pub fn run_classification(config: &ExperimentConfig, out: &Path) -> Result<Vec<ClassifierResult>, ExperimentError> {
    let backbones = config.classify.backbone_specs()?;
    let cfg = config.classify.config(config.seed);
    let mut results = Vec::new();
    for entry in &config.grid.datasets {
        let Some(ds) = affective_dataset(entry, &config.data)? else {
            log::warn!("dataset `{}` has no affective labels; skipped for classification", entry.id);
            continue;
        };
        for b in &backbones {
            let (_, result) = fine_tune(b, &ds, &entry.id, &cfg)?;
            let path = out.join(format!("classify_{}__{}.json", b.name, entry.id));
            let text = serde_json::to_string_pretty(&result).expect("serializable") + "\n";
            std::fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
            results.push(result);
        }
    }
    let path = out.join("classification.csv");
    std::fs::write(&path, results_csv(&results)).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(results)
}
