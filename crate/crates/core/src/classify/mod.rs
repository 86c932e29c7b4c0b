//! Fine-tuning image classifiers on the 13-category task.

mod backbone;
mod finetune;

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tch::Tensor;

pub use backbone::{BackboneSpec, FreezeMode, PRESETS};
pub use finetune::{fine_tune, fine_tune_sets, Classifier, ClassifyConfig};

use crate::data::DataError;
use crate::imaging::ImagingError;
use crate::training::{TrainError, TrainingSet};

pub const RESULTS_HEADER: &str = "backbone,dataset,epoch,train_acc,val_acc";

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("backbone weights {path}: {message}")]
    Weights { path: PathBuf, message: String },
    #[error("backbone: {0}")]
    Backbone(String),
    #[error("cannot evaluate on an empty set")]
    EmptyPart,
    #[error("need at least 2 classes present, found {0}")]
    TooFewClasses(usize),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Accuracies after one epoch; epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochAccuracy {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub backbone: String,
    pub dataset: String,
    pub history: Vec<EpochAccuracy>,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub warnings: Vec<String>,
}

impl ClassifierResult {
    pub(crate) fn from_history(backbone: &str, dataset: &str, history: Vec<EpochAccuracy>) -> Self {
        // Earliest epoch wins ties.
        let best = history
            .iter()
            .fold(None::<&EpochAccuracy>, |b, h| match b {
                Some(b) if b.val_accuracy >= h.val_accuracy => Some(b),
                _ => Some(h),
            })
            .copied();
        Self {
            backbone: backbone.to_string(),
            dataset: dataset.to_string(),
            best_val_accuracy: best.map_or(0.0, |b| b.val_accuracy),
            best_epoch: best.map_or(0, |b| b.epoch),
            history,
            train_size: 0,
            val_size: 0,
            warnings: Vec::new(),
        }
    }

    pub fn initial(&self) -> Option<&EpochAccuracy> {
        self.history.first()
    }

    pub fn last(&self) -> Option<&EpochAccuracy> {
        self.history.last()
    }
}

/// Rows for [`RESULTS_HEADER`], one per recorded epoch.
pub fn results_csv(results: &[ClassifierResult]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in results {
        for h in &r.history {
            let _ = writeln!(s, "{},{},{},{},{}", r.backbone, r.dataset, h.epoch, h.train_accuracy, h.val_accuracy);
        }
    }
    s
}

/// Anything that assigns a class to each image of an `(n, 3, s, s)` batch.
pub trait Predictor {
    fn predict(&self, images: &Tensor) -> Result<Vec<usize>, ClassifyError>;
}

/// Fraction of `predictions` equal to `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, ClassifyError> {
    if labels.is_empty() || predictions.len() != labels.len() {
        return Err(ClassifyError::EmptyPart);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `m[true][predicted]` counts.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; num_classes]; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        m[l][p] += 1;
    }
    m
}

/// Top-1 accuracy of `predictor` over `data`, in batches of `batch_size`.
pub fn evaluate(predictor: &dyn Predictor, data: &TrainingSet, batch_size: usize) -> Result<f64, ClassifyError> {
    if data.is_empty() {
        return Err(ClassifyError::EmptyPart);
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut predictions = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk);
        predictions.extend(tch::no_grad(|| predictor.predict(&x))?);
        labels.extend(Vec::<i64>::try_from(&y).expect("int64 labels").into_iter().map(|l| l as usize));
    }
    accuracy(&predictions, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    struct Constant(usize);

    impl Predictor for Constant {
        fn predict(&self, images: &Tensor) -> Result<Vec<usize>, ClassifyError> {
            Ok(vec![self.0; images.size()[0] as usize])
        }
    }

    fn set(labels: Vec<i64>) -> TrainingSet {
        let images = vec![RgbImage::from_pixel(4, 4, Rgb([1, 2, 3])); labels.len()];
        TrainingSet::from_images(&images, labels, 13).unwrap()
    }

    #[test]
    fn constant_predictor() {
        assert_eq!(evaluate(&Constant(0), &set(vec![0; 10]), 3).unwrap(), 1.0);
        let balanced: Vec<i64> = (0..13 * 7).map(|i| i % 13).collect();
        let acc = evaluate(&Constant(0), &set(balanced), 8).unwrap();
        assert!((acc - 1.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn empty_part_is_an_error() {
        assert!(matches!(accuracy(&[], &[]), Err(ClassifyError::EmptyPart)));
    }

    #[test]
    fn accuracy_matches_hand_counted_confusion_matrix() {
        let labels = [0, 0, 1, 1, 1, 2, 2, 2, 2, 0, 1, 2, 0, 0, 1, 2, 2, 1, 0, 2];
        let preds = [0, 1, 1, 1, 0, 2, 2, 1, 2, 0, 1, 0, 0, 2, 1, 2, 2, 1, 0, 2];
        let m = confusion_matrix(&preds, &labels, 3);
        // Counted by hand from the two rows above.
        assert_eq!(m, vec![vec![4, 1, 1], vec![1, 5, 0], vec![1, 1, 6]]);
        let diag: usize = (0..3).map(|i| m[i][i]).sum();
        assert_eq!(diag, 15);
        assert_eq!(accuracy(&preds, &labels).unwrap(), 0.75);
    }

    #[test]
    fn best_epoch_is_first_maximum() {
        let h = |epoch, val_accuracy| EpochAccuracy {
            epoch,
            train_accuracy: 0.5,
            val_accuracy,
        };
        let r = ClassifierResult::from_history("b", "d", vec![h(0, 0.1), h(1, 0.4), h(2, 0.4), h(3, 0.2)]);
        assert_eq!((r.best_epoch, r.best_val_accuracy), (1, 0.4));
        let csv = results_csv(&[r]);
        assert!(csv.starts_with(RESULTS_HEADER));
        assert_eq!(csv.lines().nth(2).unwrap(), "b,d,1,0.5,0.4");
    }
}
