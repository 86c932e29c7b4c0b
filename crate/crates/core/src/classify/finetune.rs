use std::collections::BTreeSet;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tch::nn::{self, Module, OptimizerConfig};
use tch::{Device, Reduction, Tensor};

use super::backbone::Backbone;
use super::{evaluate, BackboneSpec, ClassifierResult, ClassifyError, EpochAccuracy, FreezeMode, Predictor};
use crate::data::{split, AffectiveDataset};
use crate::rng::{derive_seed, stream};
use crate::training::TrainingSet;

/// Fine-tuning hyper-parameters. Adam with cross-entropy throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_size: 32,
            lr: 1e-4,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::InvalidConfig(m.into()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Backbone plus a freshly initialised linear head.
pub struct Classifier {
    spec: BackboneSpec,
    vs: nn::VarStore,
    backbone: Backbone,
    head: nn::Linear,
    num_classes: usize,
}

impl Classifier {
    /// The head (and a native backbone without weights) draw from libtorch's
    /// global generator, seeded here; build one classifier at a time.
    pub fn new(spec: &BackboneSpec, num_classes: usize, seed: u64) -> Result<Self, ClassifyError> {
        spec.validate()?;
        if num_classes < 2 {
            return Err(ClassifyError::TooFewClasses(num_classes));
        }
        tch::manual_seed(derive_seed(seed, "classifier-init", 0) as i64);
        let mut vs = nn::VarStore::new(Device::Cpu);
        let backbone = Backbone::build(spec, &mut vs)?;
        let head = nn::linear(
            vs.root() / "head",
            spec.feature_dim as i64,
            num_classes as i64,
            Default::default(),
        );
        Ok(Self {
            spec: spec.clone(),
            vs,
            backbone,
            head,
            num_classes,
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_parameters(&self) -> usize {
        self.vs.trainable_variables().iter().map(|t| t.numel()).sum()
    }

    /// Writes every variable (backbone and head); `.safetensors` paths use
    /// that format.
    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        self.vs.save(path).map_err(|e| ClassifyError::Weights {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    fn logits(&self, x: &Tensor, train: bool) -> Result<Tensor, ClassifyError> {
        let feats = if train && self.spec.freeze_mode == FreezeMode::FullFineTune {
            self.backbone.features(x, true)?
        } else {
            tch::no_grad(|| self.backbone.features(x, false))?
        };
        Ok(self.head.forward(&feats))
    }

    fn accuracies(&mut self, train: &TrainingSet, val: &TrainingSet, epoch: usize, batch: usize) -> Result<EpochAccuracy, ClassifyError> {
        self.backbone.set_train(false);
        Ok(EpochAccuracy {
            epoch,
            train_accuracy: evaluate(self, train, batch)?,
            val_accuracy: evaluate(self, val, batch)?,
        })
    }
}

impl Predictor for Classifier {
    /// Eval-mode top-1 predictions.
    fn predict(&self, images: &Tensor) -> Result<Vec<usize>, ClassifyError> {
        let pred = self.logits(images, false)?.argmax(1, false);
        Ok(Vec::<i64>::try_from(&pred)
            .expect("int64 argmax")
            .into_iter()
            .map(|c| c as usize)
            .collect())
    }
}

/// Splits `dataset` 80/20 (stratified, same code path and seed as the data
/// split), replaces the head with a 13-way one and trains.
pub fn fine_tune(
    backbone: &BackboneSpec,
    dataset: &AffectiveDataset,
    dataset_id: &str,
    config: &ClassifyConfig,
) -> Result<(Classifier, ClassifierResult), ClassifyError> {
    config.validate()?;
    backbone.validate()?;
    let present: BTreeSet<usize> = dataset.class_indices().into_iter().collect();
    if present.len() < 2 {
        return Err(ClassifyError::TooFewClasses(present.len()));
    }
    let (train_ds, val_ds) = split(dataset, config.train_fraction, config.seed)?;
    let in_train: BTreeSet<usize> = train_ds.class_indices().into_iter().collect();
    let classes = dataset.category_map().classes();
    let mut warnings = Vec::new();
    for c in 0..classes.len() {
        if !in_train.contains(&c) {
            let msg = format!("category `{}` is absent from the training split", classes[c]);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let train = TrainingSet::from_dataset(&train_ds, backbone.input_size)?;
    let val = TrainingSet::from_dataset(&val_ds, backbone.input_size)?;
    let (clf, mut result) = fine_tune_sets(backbone, &train, &val, dataset_id, config)?;
    result.warnings.extend(warnings);
    Ok((clf, result))
}

/// Training loop on already decoded parts.
pub fn fine_tune_sets(
    backbone: &BackboneSpec,
    train: &TrainingSet,
    val: &TrainingSet,
    dataset_id: &str,
    config: &ClassifyConfig,
) -> Result<(Classifier, ClassifierResult), ClassifyError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(ClassifyError::EmptyPart);
    }
    let mut clf = Classifier::new(backbone, train.num_classes(), config.seed)?;
    let mut opt = nn::Adam::default()
        .build(&clf.vs, config.lr)
        .map_err(|e| ClassifyError::Backbone(e.to_string()))?;
    let batch = config.batch_size.min(train.len());
    let mut history = vec![clf.accuracies(train, val, 0, config.batch_size)?];

    for epoch in 1..=config.epochs {
        clf.backbone.set_train(backbone.freeze_mode == FreezeMode::FullFineTune);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(config.seed, "classifier-shuffle", epoch as u64));
        for idx in order.chunks(batch).filter(|c| c.len() >= 2) {
            let (x, y) = train.batch(idx);
            let loss = clf
                .logits(&x, true)?
                .cross_entropy_loss::<&Tensor>(&y, None, Reduction::Mean, -100, 0.0);
            if !loss.double_value(&[]).is_finite() {
                return Err(ClassifyError::NonFinite { epoch });
            }
            opt.backward_step(&loss);
        }
        let acc = clf.accuracies(train, val, epoch, config.batch_size)?;
        info!(
            "{} epoch {epoch}: train {:.4} val {:.4}",
            backbone.name, acc.train_accuracy, acc.val_accuracy
        );
        history.push(acc);
    }

    let mut result = ClassifierResult::from_history(&backbone.name, dataset_id, history);
    result.train_size = train.len();
    result.val_size = val.len();
    Ok((clf, result))
}
