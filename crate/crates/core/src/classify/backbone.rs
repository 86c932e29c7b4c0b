use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tch::nn::{self, ModuleT};
use tch::{Kind, Tensor, TrainableCModule};

use super::ClassifyError;

/// Which parameters fine-tuning updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    /// Backbone frozen (eval mode, no gradients); only the new head trains.
    HeadOnly,
    #[default]
    FullFineTune,
}

impl FromStr for FreezeMode {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "head_only" | "head" => Ok(Self::HeadOnly),
            "full_fine_tune" | "full" => Ok(Self::FullFineTune),
            other => Err(ClassifyError::InvalidConfig(format!("unknown freeze mode `{other}`"))),
        }
    }
}

/// A feature extractor the 13-way head is attached to.
///
/// With `weights_path` pointing at a TorchScript file (`.pt`/`.ts`), the
/// module is loaded as-is and must map `(n, 3, s, s)` RGB in `[0, 1]` to
/// `(n, feature_dim)` features (it does its own normalisation). A
/// `.safetensors` file holds weights for the built-in CNN; no path at all
/// means the built-in CNN from a seeded random init.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSpec {
    pub name: String,
    pub feature_dim: usize,
    pub weights_path: Option<PathBuf>,
    pub freeze_mode: FreezeMode,
    pub input_size: usize,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self::native(128)
    }
}

/// Exported torchvision-style backbones: name and penultimate width.
pub const PRESETS: [(&str, usize); 4] = [
    ("resnet18", 512),
    ("resnet152", 2048),
    ("vgg19", 4096),
    ("efficientnet_b7", 2560),
];

impl BackboneSpec {
    pub fn native(feature_dim: usize) -> Self {
        Self {
            name: "native-cnn".into(),
            feature_dim,
            weights_path: None,
            freeze_mode: FreezeMode::FullFineTune,
            input_size: 64,
        }
    }

    /// One of [`PRESETS`], expecting `<dir>/<name>.pt` exported with the
    /// classification layer stripped.
    pub fn preset(name: &str, dir: &Path) -> Result<Self, ClassifyError> {
        let (name, dim) = PRESETS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| ClassifyError::InvalidConfig(format!("unknown backbone preset `{name}`")))?;
        Ok(Self {
            name: name.to_string(),
            feature_dim: *dim,
            weights_path: Some(dir.join(format!("{name}.pt"))),
            freeze_mode: FreezeMode::FullFineTune,
            input_size: 224,
        })
    }

    pub fn is_torchscript(&self) -> bool {
        self.weights_path
            .as_deref()
            .and_then(Path::extension)
            .is_some_and(|e| e == "pt" || e == "ts")
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.feature_dim == 0 {
            return Err(ClassifyError::InvalidConfig("feature_dim must be positive".into()));
        }
        if self.input_size < 8 {
            return Err(ClassifyError::InvalidConfig("input_size must be at least 8".into()));
        }
        if let Some(p) = &self.weights_path {
            if !p.is_file() {
                return Err(ClassifyError::Weights {
                    path: p.clone(),
                    message: "file not found".into(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) enum Backbone {
    Native(nn::SequentialT),
    TorchScript(TrainableCModule),
}

fn conv_block(p: nn::Path, c_in: i64, c_out: i64, stride: i64) -> nn::SequentialT {
    let cfg = nn::ConvConfig {
        stride,
        padding: 1,
        bias: false,
        ..Default::default()
    };
    nn::seq_t()
        .add(nn::conv2d(&p / "conv", c_in, c_out, 3, cfg))
        .add(nn::batch_norm2d(&p / "bn", c_out, Default::default()))
        .add_fn(|x| x.relu())
}

/// Four stride-2 conv blocks and global average pooling.
fn native_cnn(p: &nn::Path, feature_dim: i64) -> nn::SequentialT {
    nn::seq_t()
        .add(conv_block(p / "b0", 3, 32, 2))
        .add(conv_block(p / "b1", 32, 64, 2))
        .add(conv_block(p / "b2", 64, 128, 2))
        .add(conv_block(p / "b3", 128, feature_dim, 2))
        .add_fn(|x| x.mean_dim([2i64, 3].as_slice(), false, Kind::Float))
}

fn weights_err(path: &Path, e: impl std::fmt::Display) -> ClassifyError {
    ClassifyError::Weights {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl Backbone {
    /// Registers the backbone's variables under `vs/backbone`.
    pub(crate) fn build(spec: &BackboneSpec, vs: &mut nn::VarStore) -> Result<Self, ClassifyError> {
        let root = vs.root() / "backbone";
        let backbone = match &spec.weights_path {
            Some(path) if spec.is_torchscript() => {
                Self::TorchScript(TrainableCModule::load(path, root).map_err(|e| weights_err(path, e))?)
            }
            weights => {
                let net = Self::Native(native_cnn(&root, spec.feature_dim as i64));
                if let Some(path) = weights {
                    vs.load(path).map_err(|e| weights_err(path, e))?;
                }
                net
            }
        };
        // Probe: the declared width must be what the backbone produces.
        let s = spec.input_size as i64;
        let probe = tch::no_grad(|| backbone.features(&Tensor::zeros([2, 3, s, s], tch::kind::FLOAT_CPU), false));
        let got = probe.map_err(|e| match (e, &spec.weights_path) {
            (ClassifyError::Backbone(m), Some(p)) => weights_err(p, m),
            (e, _) => e,
        })?;
        if got.size() != [2, spec.feature_dim as i64] {
            let msg = format!("backbone produces {:?} features, spec declares {}", got.size(), spec.feature_dim);
            return Err(match &spec.weights_path {
                Some(p) => weights_err(p, msg),
                None => ClassifyError::Backbone(msg),
            });
        }
        Ok(backbone)
    }

    pub(crate) fn set_train(&mut self, train: bool) {
        if let Self::TorchScript(m) = self {
            if train {
                m.set_train()
            } else {
                m.set_eval()
            }
        }
    }

    /// `x` holds images in `[-1, 1]`.
    pub(crate) fn features(&self, x: &Tensor, train: bool) -> Result<Tensor, ClassifyError> {
        match self {
            Self::Native(net) => Ok(net.forward_t(x, train)),
            Self::TorchScript(m) => {
                let out = m
                    .forward_ts(&[x * 0.5 + 0.5])
                    .map_err(|e| ClassifyError::Backbone(e.to_string()))?;
                Ok(out.flatten(1, -1))
            }
        }
    }
}
