use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Highest number of noise channels a progressive-augmentation discriminator
/// may receive.
pub const PAGAN_LEVEL_CAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dcgan,
    Cgan,
    Acgan,
    Pagan,
    WganGp,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Dcgan, Family::Cgan, Family::Acgan, Family::Pagan, Family::WganGp];

    pub fn is_conditional(self) -> bool {
        matches!(self, Family::Cgan | Family::Acgan)
    }

    /// Critic families emit an unbounded score instead of a probability.
    pub fn is_critic(self) -> bool {
        self == Family::WganGp
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Dcgan => "dcgan",
            Family::Cgan => "cgan",
            Family::Acgan => "acgan",
            Family::Pagan => "pagan",
            Family::WganGp => "wgan_gp",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::Dcgan => "DCGAN",
            Family::Cgan => "CGAN",
            Family::Acgan => "ACGAN",
            Family::Pagan => "PAGAN",
            Family::WganGp => "WGAN GP.",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("wgan-gp") && *f == Family::WganGp))
            .ok_or_else(|| ModelError::InvalidSpec(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscVariant {
    BatchNorm,
    Dropout,
    SpectralNorm,
}

impl DiscVariant {
    pub const ALL: [DiscVariant; 3] = [DiscVariant::BatchNorm, DiscVariant::Dropout, DiscVariant::SpectralNorm];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscVariant::BatchNorm => "batch_norm",
            DiscVariant::Dropout => "dropout",
            DiscVariant::SpectralNorm => "spectral_norm",
        }
    }

    /// Suffix used in score tables ("DCGAN D.", "CGAN SN.").
    pub fn table_suffix(self) -> &'static str {
        match self {
            DiscVariant::BatchNorm => "",
            DiscVariant::Dropout => " D.",
            DiscVariant::SpectralNorm => " SN.",
        }
    }
}

impl fmt::Display for DiscVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiscVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "batch_norm" | "batchnorm" | "bn" => Ok(DiscVariant::BatchNorm),
            "dropout" | "d" => Ok(DiscVariant::Dropout),
            "spectral_norm" | "spectralnorm" | "sn" => Ok(DiscVariant::SpectralNorm),
            _ => Err(ModelError::InvalidSpec(format!("unknown discriminator variant `{s}`"))),
        }
    }
}

/// Declarative description of one generator/discriminator pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub family: Family,
    pub disc_variant: DiscVariant,
    pub latent_dim: usize,
    /// Square side in pixels; a power of two, at least 32.
    pub image_size: usize,
    pub channels: usize,
    /// Zero for unconditional families.
    pub num_classes: usize,
    pub pagan_max_level: usize,
    /// Feature maps of the outermost conv blocks; inner blocks double it.
    pub base_width: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            family: Family::Dcgan,
            disc_variant: DiscVariant::BatchNorm,
            latent_dim: 100,
            image_size: 64,
            channels: 3,
            num_classes: 0,
            pagan_max_level: PAGAN_LEVEL_CAP,
            base_width: 64,
        }
    }
}

impl ModelSpec {
    pub fn new(family: Family, disc_variant: DiscVariant) -> Self {
        Self {
            family,
            disc_variant,
            ..Self::default()
        }
    }

    /// Fills `num_classes` from the label count for conditional families and
    /// zeroes it otherwise.
    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = if self.family.is_conditional() { num_classes } else { 0 };
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSpec(msg));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if self.image_size < 32 || !self.image_size.is_power_of_two() {
            return bad(format!("image_size {} must be a power of two >= 32", self.image_size));
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if self.base_width == 0 {
            return bad("base_width must be positive".into());
        }
        if self.family.is_conditional() != (self.num_classes > 0) {
            return bad(format!(
                "num_classes = {} is invalid for family {}",
                self.num_classes, self.family
            ));
        }
        if self.pagan_max_level > PAGAN_LEVEL_CAP {
            return bad(format!(
                "pagan_max_level {} exceeds the cap of {PAGAN_LEVEL_CAP}",
                self.pagan_max_level
            ));
        }
        Ok(())
    }

    /// Stable identifier, e.g. `dcgan-dropout`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.family, self.disc_variant)
    }

    /// Table label, e.g. `DCGAN D.`.
    pub fn label(&self) -> String {
        format!("{}{}", self.family.label(), self.disc_variant.table_suffix())
    }

    /// Number of stride-2 resolution steps between 4×4 and `image_size`.
    pub(crate) fn doublings(&self) -> usize {
        self.image_size.trailing_zeros() as usize - 2
    }
}
