use serde::{Deserialize, Serialize};

use super::DataError;

/// Bounds of a source dataset's raw rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min_raw: f64,
    pub max_raw: f64,
}

impl RatingScale {
    pub fn new(min_raw: f64, max_raw: f64) -> Result<Self, DataError> {
        let scale = Self { min_raw, max_raw };
        scale.validate()?;
        Ok(scale)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !self.min_raw.is_finite() || !self.max_raw.is_finite() || self.max_raw <= self.min_raw {
            return Err(DataError::InvalidScale {
                min: self.min_raw,
                max: self.max_raw,
            });
        }
        Ok(())
    }

    pub fn contains(&self, raw: f64) -> bool {
        raw >= self.min_raw && raw <= self.max_raw
    }
}

/// Valence and arousal scales of one source dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScales {
    pub valence: RatingScale,
    pub arousal: RatingScale,
}

impl SourceScales {
    pub const fn symmetric(min_raw: f64, max_raw: f64) -> Self {
        let scale = RatingScale { min_raw, max_raw };
        Self {
            valence: scale,
            arousal: scale,
        }
    }
}

/// Affinely maps `raw` from `scale` onto `[-1, 1]`.
///
/// The endpoints and the midpoint of the scale map to exactly `-1`, `1` and
/// `0`; everything else is clamped into the closed interval.
pub fn normalize_rating(raw: f64, scale: &RatingScale) -> Result<f64, DataError> {
    scale.validate()?;
    if !raw.is_finite() || !scale.contains(raw) {
        return Err(DataError::RatingOutOfRange {
            record: String::new(),
            value: raw,
            min: scale.min_raw,
            max: scale.max_raw,
        });
    }
    if raw == scale.min_raw {
        return Ok(-1.0);
    }
    if raw == scale.max_raw {
        return Ok(1.0);
    }
    let mid = (scale.min_raw + scale.max_raw) / 2.0;
    let half = (scale.max_raw - scale.min_raw) / 2.0;
    Ok(((raw - mid) / half).clamp(-1.0, 1.0))
}
