use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CategoryMap, DataError, SourceScales, SYNTHETIC_SOURCE};

/// Per-source rating scales plus the category map.
///
/// Read from the `[data]` section of a config file, e.g.
///
/// ```toml
/// [data.category_map]
/// neutral_radius = 0.25
/// sector_labels = ["Happy", "Delighted", ...]
///
/// [data.scales.GAPED]
/// valence = { min_raw = 0.0, max_raw = 100.0 }
/// arousal = { min_raw = 0.0, max_raw = 100.0 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub scales: BTreeMap<String, SourceScales>,
    pub category_map: CategoryMap,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scales: default_scales(),
            category_map: CategoryMap::default(),
        }
    }
}

pub fn default_scales() -> BTreeMap<String, SourceScales> {
    [
        ("IAPS", SourceScales::symmetric(1.0, 9.0)),
        ("NAPS", SourceScales::symmetric(1.0, 9.0)),
        ("SFIP", SourceScales::symmetric(1.0, 9.0)),
        ("GAPED", SourceScales::symmetric(0.0, 100.0)),
        ("OASIS", SourceScales::symmetric(1.0, 7.0)),
        ("EmoMadrid", SourceScales::symmetric(-2.0, 2.0)),
        (SYNTHETIC_SOURCE, SourceScales::symmetric(1.0, 9.0)),
    ]
    .into_iter()
    .map(|(name, scales)| (name.to_string(), scales))
    .collect()
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        self.category_map.validate()?;
        for scales in self.scales.values() {
            scales.valence.validate()?;
            scales.arousal.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let cfg: DataConfig = toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
