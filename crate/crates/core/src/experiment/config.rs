use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::classify::{BackboneSpec, ClassifyConfig, FreezeMode};
use crate::data::DataConfig;
use crate::metrics::{FeatureExtractor, StubExtractor, TorchScriptExtractor};
use crate::models::{DiscVariant, Family, ModelSpec};
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

/// The twelve model cells of the reference ablation, in table order.
pub fn default_models() -> Vec<String> {
    let families = [Family::Dcgan, Family::Cgan, Family::Pagan, Family::WganGp];
    families
        .iter()
        .flat_map(|&f| DiscVariant::ALL.iter().map(move |&v| ModelSpec::new(f, v).id()))
        .collect()
}

/// Parses a model id such as `pagan-spectral_norm`.
pub fn parse_model_id(id: &str) -> Result<(Family, DiscVariant), ExperimentError> {
    let bad = || ExperimentError::Config(format!("grid.models: `{id}` is not `<family>-<variant>`"));
    let (f, v) = id.rsplit_once('-').ok_or_else(bad)?;
    Ok((f.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?))
}

/// Architecture knobs shared by every cell; family, variant and class count
/// come from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub latent_dim: usize,
    pub image_size: usize,
    pub base_width: usize,
}

impl Default for ModelOverrides {
    fn default() -> Self {
        let d = ModelSpec::default();
        Self {
            latent_dim: d.latent_dim,
            image_size: d.image_size,
            base_width: d.base_width,
        }
    }
}

impl ModelOverrides {
    pub fn spec(&self, family: Family, variant: DiscVariant, num_classes: usize, pagan_max_level: usize) -> ModelSpec {
        ModelSpec {
            latent_dim: self.latent_dim,
            image_size: self.image_size,
            base_width: self.base_width,
            pagan_max_level,
            ..ModelSpec::new(family, variant)
        }
        .with_classes(num_classes)
    }
}

/// `extractor = "stub"` or `"torchscript"` (with `weights`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub extractor: String,
    pub weights: Option<PathBuf>,
    pub input_size: usize,
    pub feature_dim: usize,
    pub stub_seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            extractor: "stub".into(),
            weights: None,
            input_size: 299,
            feature_dim: 2048,
            stub_seed: 0,
        }
    }
}

impl MetricsConfig {
    pub fn build(&self) -> Result<Box<dyn FeatureExtractor>, ExperimentError> {
        match self.extractor.as_str() {
            "stub" => Ok(Box::new(StubExtractor::new(self.stub_seed))),
            "torchscript" => {
                let path = self
                    .weights
                    .as_deref()
                    .ok_or_else(|| ExperimentError::Config("metrics.weights is required for torchscript".into()))?;
                Ok(Box::new(TorchScriptExtractor::load(path, self.input_size, self.feature_dim)?))
            }
            other => Err(ExperimentError::Config(format!(
                "metrics.extractor: unknown extractor `{other}` (stub | torchscript)"
            ))),
        }
    }
}

/// One dataset cell. Exactly one of `csv` (a built dataset), `manifests`
/// (raw manifests, built on load) or `image_dir` (unrated images, one class
/// per sub-directory) is set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    pub csv: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub image_dir: Option<PathBuf>,
}

impl DatasetEntry {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let set = usize::from(self.csv.is_some()) + usize::from(!self.manifests.is_empty()) + usize::from(self.image_dir.is_some());
        if self.id.is_empty() || self.id.contains(['/', '\\']) || self.id.contains("__") {
            return Err(ExperimentError::Config(format!(
                "grid.datasets: invalid id `{}` (non-empty, no slashes or `__`)",
                self.id
            )));
        }
        if set != 1 {
            return Err(ExperimentError::Config(format!(
                "grid.datasets `{}`: set exactly one of csv, manifests, image_dir",
                self.id
            )));
        }
        Ok(())
    }
}

/// Training-config keys replaced for matching cells (`None` matches all).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellOverride {
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub train: toml::Table,
}

impl CellOverride {
    pub fn matches(&self, model_id: &str, dataset_id: &str) -> bool {
        self.model.as_deref().is_none_or(|m| m == model_id) && self.dataset.as_deref().is_none_or(|d| d == dataset_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub models: Vec<String>,
    pub datasets: Vec<DatasetEntry>,
    /// Cells trained concurrently.
    pub workers: usize,
    /// Independent seeds per cell; the table reports medians.
    pub repeats: usize,
    pub overrides: Vec<CellOverride>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            models: default_models(),
            datasets: Vec::new(),
            workers: 1,
            repeats: 1,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_fraction: f64,
    pub freeze_mode: FreezeMode,
    /// Preset names resolved to `<backbone_dir>/<name>.pt`.
    pub presets: Vec<String>,
    pub backbone_dir: Option<PathBuf>,
    pub backbones: Vec<BackboneSpec>,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let c = ClassifyConfig::default();
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            train_fraction: c.train_fraction,
            freeze_mode: FreezeMode::FullFineTune,
            presets: Vec::new(),
            backbone_dir: None,
            backbones: Vec::new(),
        }
    }
}

impl ClassifySection {
    pub fn config(&self, seed: u64) -> ClassifyConfig {
        ClassifyConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            train_fraction: self.train_fraction,
            seed,
        }
    }

    /// Explicit backbones followed by presets; the native CNN when neither
    /// is given.
    pub fn backbone_specs(&self) -> Result<Vec<BackboneSpec>, ExperimentError> {
        let mut out = self.backbones.clone();
        if !self.presets.is_empty() {
            let dir = self
                .backbone_dir
                .as_deref()
                .ok_or_else(|| ExperimentError::Config("classify.backbone_dir is required with presets".into()))?;
            for name in &self.presets {
                out.push(BackboneSpec::preset(name, dir)?);
            }
        }
        if out.is_empty() {
            out.push(BackboneSpec::default());
        }
        for b in &mut out {
            b.freeze_mode = self.freeze_mode;
        }
        Ok(out)
    }
}

/// Whole experiment description; `seed` is copied into every section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelOverrides,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub grid: GridConfig,
    pub classify: ClassifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: 0,
            data: DataConfig::default(),
            model: ModelOverrides::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            grid: GridConfig::default(),
            classify: ClassifySection::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        if cfg.format_version != FORMAT_VERSION {
            return Err(ExperimentError::UnsupportedVersion(cfg.format_version));
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.rebase_paths(&base);
        Ok(cfg)
    }

    pub fn rebase_paths(&mut self, base: &Path) {
        for d in &mut self.grid.datasets {
            d.csv.iter_mut().chain(d.image_dir.iter_mut()).chain(d.manifests.iter_mut()).for_each(|p| rebase(base, p));
        }
        self.metrics.weights.iter_mut().for_each(|p| rebase(base, p));
        self.classify.backbone_dir.iter_mut().for_each(|p| rebase(base, p));
        for b in &mut self.classify.backbones {
            b.weights_path.iter_mut().for_each(|p| rebase(base, p));
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let section = |name: &str, e: &dyn std::fmt::Display| ExperimentError::Config(format!("{name}: {e}"));
        self.data.validate().map_err(|e| section("data", &e))?;
        self.train.validate().map_err(|e| section("train", &e))?;
        self.classify.config(self.seed).validate().map_err(|e| section("classify", &e))?;
        self.model
            .spec(Family::Dcgan, DiscVariant::BatchNorm, 0, self.train.pagan_max_level)
            .validate()
            .map_err(|e| section("model", &e))?;
        if self.grid.workers == 0 || self.grid.repeats == 0 {
            return Err(ExperimentError::Config("grid.workers and grid.repeats must be positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.grid.models {
            parse_model_id(m)?;
            if !seen.insert(m) {
                return Err(ExperimentError::Config(format!("grid.models: duplicate `{m}`")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.grid.datasets {
            d.validate()?;
            if !seen.insert(&d.id) {
                return Err(ExperimentError::Config(format!("grid.datasets: duplicate id `{}`", d.id)));
            }
        }
        for o in &self.grid.overrides {
            self.cell_train_config_with(o.model.as_deref().unwrap_or(""), o.dataset.as_deref().unwrap_or(""), [o])?;
        }
        Ok(())
    }

    fn cell_train_config_with<'a>(
        &self,
        model_id: &str,
        dataset_id: &str,
        overrides: impl IntoIterator<Item = &'a CellOverride>,
    ) -> Result<TrainConfig, ExperimentError> {
        let mut value = toml::Table::try_from(&self.train).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let mut touched = false;
        for o in overrides {
            for (k, v) in &o.train {
                value.insert(k.clone(), v.clone());
                touched = true;
            }
        }
        if !touched {
            return Ok(self.train.clone());
        }
        let cfg: TrainConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e| ExperimentError::Config(format!("grid.overrides ({model_id}, {dataset_id}): {e}")))?;
        cfg.validate()
            .map_err(|e| ExperimentError::Config(format!("grid.overrides ({model_id}, {dataset_id}): {e}")))?;
        Ok(cfg)
    }

    /// Training config of one cell after applying matching overrides in
    /// file order.
    pub fn cell_train_config(&self, model_id: &str, dataset_id: &str) -> Result<TrainConfig, ExperimentError> {
        let matching = self.grid.overrides.iter().filter(|o| o.matches(model_id, dataset_id));
        self.cell_train_config_with(model_id, dataset_id, matching)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}
