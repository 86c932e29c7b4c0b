//! Quadrant and category labelling of the valence–arousal plane.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;

pub const NEUTRAL: &str = "Neutral";
pub const SECTOR_COUNT: usize = 12;
pub const SECTOR_WIDTH_DEG: f64 = 360.0 / SECTOR_COUNT as f64;

/// Sign region of the valence (x) / arousal (y) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    QI,
    QII,
    QIII,
    QIV,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::QI, Quadrant::QII, Quadrant::QIII, Quadrant::QIV];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::QI => "QI",
            Quadrant::QII => "QII",
            Quadrant::QIII => "QIII",
            Quadrant::QIV => "QIV",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "QI" => Ok(Quadrant::QI),
            "QII" => Ok(Quadrant::QII),
            "QIII" => Ok(Quadrant::QIII),
            "QIV" => Ok(Quadrant::QIV),
            other => Err(DataError::Parse(format!("unknown quadrant `{other}`"))),
        }
    }
}

/// Zero counts as non-negative on both axes.
pub fn assign_quadrant(valence: f64, arousal: f64) -> Quadrant {
    match (valence >= 0.0, arousal >= 0.0) {
        (true, true) => Quadrant::QI,
        (false, true) => Quadrant::QII,
        (false, false) => Quadrant::QIII,
        (true, false) => Quadrant::QIV,
    }
}

/// Twelve 30° sectors around a central neutral disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoryMap {
    pub neutral_radius: f64,
    /// Counterclockwise from the positive-valence axis, starting at `sector_offset_deg`.
    pub sector_labels: Vec<String>,
    pub sector_offset_deg: f64,
}

impl Default for CategoryMap {
    fn default() -> Self {
        Self {
            neutral_radius: 0.25,
            sector_labels: [
                "Happy",
                "Delighted",
                "Excited",
                "Tense",
                "Angry",
                "Frustrated",
                "Depressed",
                "Bored",
                "Tired",
                "Calm",
                "Relaxed",
                "Content",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            sector_offset_deg: 0.0,
        }
    }
}

impl CategoryMap {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidCategoryMap(msg));
        if !(self.neutral_radius > 0.0 && self.neutral_radius < 1.0) {
            return bad(format!("neutral_radius {} not in (0, 1)", self.neutral_radius));
        }
        if !self.sector_offset_deg.is_finite() {
            return bad("sector_offset_deg must be finite".into());
        }
        if self.sector_labels.len() != SECTOR_COUNT {
            return bad(format!(
                "expected {SECTOR_COUNT} sector labels, got {}",
                self.sector_labels.len()
            ));
        }
        for (i, label) in self.sector_labels.iter().enumerate() {
            if label.is_empty() || label == NEUTRAL {
                return bad(format!("invalid sector label `{label}`"));
            }
            if self.sector_labels[..i].contains(label) {
                return bad(format!("duplicate sector label `{label}`"));
            }
        }
        Ok(())
    }

    /// All thirteen class names: the sectors in map order, then `Neutral`.
    pub fn classes(&self) -> Vec<&str> {
        self.sector_labels
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(NEUTRAL))
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.sector_labels.len() + 1
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        if label == NEUTRAL {
            return Some(self.sector_labels.len());
        }
        self.sector_labels.iter().position(|l| l == label)
    }

    /// Sector index containing the polar angle of `(valence, arousal)`.
    pub fn sector_of(&self, valence: f64, arousal: f64) -> usize {
        let angle = (arousal.atan2(valence).to_degrees() - self.sector_offset_deg).rem_euclid(360.0);
        // A tiny negative angle rounds up to exactly 360.
        if angle >= 360.0 {
            return SECTOR_COUNT - 1;
        }
        ((angle / SECTOR_WIDTH_DEG).floor() as usize).min(SECTOR_COUNT - 1)
    }

    /// Centre point of a class region at the given radius (the origin for `Neutral`).
    pub fn class_centre(&self, class: usize, radius: f64) -> (f64, f64) {
        if class >= SECTOR_COUNT {
            return (0.0, 0.0);
        }
        let angle = (self.sector_offset_deg + SECTOR_WIDTH_DEG * (class as f64 + 0.5)).to_radians();
        (radius * angle.cos(), radius * angle.sin())
    }
}

/// Neutral inside the disk, otherwise the sector label (lower boundary inclusive).
pub fn assign_category(valence: f64, arousal: f64, map: &CategoryMap) -> &str {
    if valence.hypot(arousal) < map.neutral_radius {
        NEUTRAL
    } else {
        &map.sector_labels[map.sector_of(valence, arousal)]
    }
}
