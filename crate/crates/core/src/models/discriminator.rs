use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

use super::generator::check_labels;
use super::layers::{batch_norm, conv2d, dropout, leaky_relu};
use super::params::{normal_tensor, ParamStore};
use super::spectral::spectral_normalize;
use super::{DiscVariant, Family, ModelError, ModelSpec, INIT_STD, PAGAN_LEVEL_CAP};
use crate::rng::stream;

/// Dropout probability after each block of the dropout variant.
pub const DROPOUT_P: f64 = 0.3;
/// Power iterations per forward pass for spectral normalization.
const SN_ITERS: usize = 1;

#[derive(Debug, Clone)]
struct Block {
    prefix: String,
    c_out: i64,
    stride: i64,
    pad: i64,
    batch_norm: bool,
    bias: bool,
}

/// Strided-conv discriminator mirroring the generator. Critic families
/// return raw scores; the others return logits whose sigmoid is the
/// probability of "real".
#[derive(Debug)]
pub struct Discriminator {
    spec: ModelSpec,
    level: usize,
    seed: u64,
    store: ParamStore,
    blocks: Vec<Block>,
}

/// Result of one discriminator pass.
#[derive(Debug)]
pub struct DiscOutput {
    /// Per-sample logit (or critic score for WGAN-GP), shape `(n)`.
    pub score: Tensor,
    /// ACGAN auxiliary class logits, shape `(n, num_classes)`.
    pub class_logits: Option<Tensor>,
    critic: bool,
}

impl DiscOutput {
    /// Probability of "real" for non-critic families; `None` for WGAN-GP,
    /// whose output is deliberately left unsquashed.
    pub fn probability(&self) -> Option<Tensor> {
        (!self.critic).then(|| self.score.sigmoid())
    }
}

fn check_level(spec: &ModelSpec, level: usize) -> Result<(), ModelError> {
    let max = spec.pagan_max_level.min(PAGAN_LEVEL_CAP);
    if level > max || (level > 0 && spec.family != Family::Pagan) {
        return Err(ModelError::PaganLevel {
            level,
            max: if spec.family == Family::Pagan { max } else { 0 },
        });
    }
    Ok(())
}

/// Builds a discriminator whose first layer accepts `channels + pagan_level`
/// input planes (plus one label plane for CGAN).
pub fn build_discriminator(spec: &ModelSpec, pagan_level: usize, seed: u64) -> Result<Discriminator, ModelError> {
    spec.validate()?;
    check_level(spec, pagan_level)?;
    let sn = spec.disc_variant == DiscVariant::SpectralNorm;
    let d = spec.doublings();
    let w = spec.base_width as i64;
    let mut blocks: Vec<Block> = (0..d)
        .map(|i| {
            let batch_norm = !sn && i > 0;
            Block {
                prefix: format!("d.b{i}"),
                c_out: w << i,
                stride: 2,
                pad: 1,
                batch_norm,
                bias: !batch_norm,
            }
        })
        .collect();
    let head = |prefix: &str, c_out: i64| Block {
        prefix: prefix.into(),
        c_out,
        stride: 1,
        pad: 0,
        batch_norm: false,
        bias: true,
    };
    blocks.push(head("d.head", 1));
    if spec.family == Family::Acgan {
        blocks.push(head("d.aux", spec.num_classes as i64));
    }

    let mut rng = stream(seed, "discriminator-init", 0);
    let mut store = ParamStore::new();
    let label_plane = spec.family == Family::Cgan;
    if label_plane {
        let plane = (spec.image_size * spec.image_size) as i64;
        store.insert_param("d.embed", normal_tensor(&[spec.num_classes as i64, plane], 1.0, &mut rng));
    }
    let mut c_in = (spec.channels + pagan_level + label_plane as usize) as i64;
    let top = w << (d - 1);
    for (i, b) in blocks.iter().enumerate() {
        let fan_in = if i < d { c_in } else { top };
        let p = &b.prefix;
        store.insert_param(&format!("{p}.weight"), normal_tensor(&[b.c_out, fan_in, 4, 4], INIT_STD, &mut rng));
        if b.bias {
            store.insert_param(&format!("{p}.bias"), zeros(b.c_out));
        }
        if b.batch_norm {
            store.insert_param(&format!("{p}.bn.weight"), normal_tensor(&[b.c_out], INIT_STD, &mut rng) + 1.0);
            store.insert_param(&format!("{p}.bn.bias"), zeros(b.c_out));
        }
        if sn {
            let u = normal_tensor(&[b.c_out], 1.0, &mut rng);
            store.insert_buffer(&format!("{p}.sn_u"), &u / u.norm());
        }
        c_in = b.c_out;
    }
    Ok(Discriminator {
        spec: spec.clone(),
        level: pagan_level,
        seed,
        store,
        blocks,
    })
}

fn zeros(n: i64) -> Tensor {
    Tensor::zeros([n], (Kind::Float, tch::Device::Cpu))
}

impl Discriminator {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn pagan_level(&self) -> usize {
        self.level
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> i64 {
        self.store.num_parameters()
    }

    /// Image channels the caller must supply (PAGAN noise planes included;
    /// the CGAN label plane is added internally).
    pub fn input_channels(&self) -> usize {
        self.spec.channels + self.level
    }

    /// Ordered list of operations, for inspecting the graph structure.
    pub fn describe(&self) -> Vec<String> {
        let mut ops = Vec::new();
        if self.spec.family == Family::Cgan {
            ops.push("label_plane".to_string());
        }
        let sn = self.spec.disc_variant == DiscVariant::SpectralNorm;
        for b in &self.blocks {
            if sn {
                ops.push(format!("spectral_norm({})", b.prefix));
            }
            ops.push(format!("conv({}, out={}, stride={})", b.prefix, b.c_out, b.stride));
            if b.stride == 2 {
                if b.batch_norm {
                    ops.push("batch_norm".into());
                }
                ops.push("leaky_relu(0.2)".into());
                if self.spec.disc_variant == DiscVariant::Dropout {
                    ops.push(format!("dropout({DROPOUT_P})"));
                }
            }
        }
        if !self.spec.family.is_critic() {
            ops.push("sigmoid".into());
        }
        ops
    }

    /// Adds input planes for a higher PAGAN level. Existing weights are kept;
    /// the new input slices of the first conv are freshly initialized.
    pub fn grow(&mut self, level: usize) -> Result<(), ModelError> {
        check_level(&self.spec, level)?;
        if level < self.level {
            return Err(ModelError::PaganLevel {
                level,
                max: self.spec.pagan_max_level,
            });
        }
        if level == self.level {
            return Ok(());
        }
        let mut rng = stream(self.seed, "pagan-grow", level as u64);
        let old = self.store.param("d.b0.weight").detach();
        let c_out = old.size()[0];
        let extra = normal_tensor(&[c_out, (level - self.level) as i64, 4, 4], INIT_STD, &mut rng);
        self.store.insert_param("d.b0.weight", Tensor::cat(&[&old, &extra], 1));
        self.level = level;
        Ok(())
    }

    fn weight(&mut self, prefix: &str, train: bool) -> Result<Tensor, ModelError> {
        let w = self.store.param(&format!("{prefix}.weight"));
        if self.spec.disc_variant != DiscVariant::SpectralNorm {
            return Ok(w.shallow_clone());
        }
        let name = format!("{prefix}.sn_u");
        let mut u = self.store.buffer(&name).shallow_clone();
        let out = spectral_normalize(w, SN_ITERS, &mut u)?;
        if train {
            self.store.insert_buffer(&name, u);
        }
        Ok(out)
    }

    /// Scores `(n, input_channels, size, size)` images. `labels` is required
    /// for CGAN. Passing `dropout_rng` selects training mode: dropout masks
    /// are drawn from it and spectral-norm state advances; with `None` the
    /// pass is side-effect free.
    pub fn forward(
        &mut self,
        x: &Tensor,
        labels: Option<&Tensor>,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DiscOutput, ModelError> {
        let size = x.size();
        let s = self.spec.image_size as i64;
        let c = self.input_channels() as i64;
        if size.len() != 4 || size[1] != c || size[2] != s || size[3] != s {
            return Err(ModelError::Shape {
                got: size,
                expected: format!("(n, {c}, {s}, {s})"),
            });
        }
        let n = size[0];
        let train = dropout_rng.is_some();
        let mut h = if self.spec.family == Family::Cgan {
            let labels = labels.ok_or(ModelError::MissingLabels(self.spec.family))?;
            check_labels(labels, n, self.spec.num_classes)?;
            let plane = self.store.param("d.embed").index_select(0, labels).view([n, 1, s, s]);
            Tensor::cat(&[x, &plane], 1)
        } else {
            x.shallow_clone()
        };

        let blocks = self.blocks.clone();
        let mut score = None;
        let mut class_logits = None;
        for b in &blocks {
            let w = self.weight(&b.prefix, train)?;
            let bias = b.bias.then(|| self.store.param(&format!("{}.bias", b.prefix)));
            if b.stride == 1 {
                let out = conv2d(&h, &w, bias, 1, 0).view([n, -1]);
                if b.prefix == "d.head" {
                    score = Some(out.view([n]));
                } else {
                    class_logits = Some(out);
                }
                continue;
            }
            h = conv2d(&h, &w, bias, b.stride, b.pad);
            if b.batch_norm {
                h = batch_norm(
                    &h,
                    self.store.param(&format!("{}.bn.weight", b.prefix)),
                    self.store.param(&format!("{}.bn.bias", b.prefix)),
                );
            }
            h = leaky_relu(&h);
            if self.spec.disc_variant == DiscVariant::Dropout {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    h = dropout(&h, DROPOUT_P, rng);
                }
            }
        }
        Ok(DiscOutput {
            score: score.expect("head block is always present"),
            class_logits,
            critic: self.spec.family.is_critic(),
        })
    }
}

/// Appends `level` planes of ±1 noise to `(n, c, h, w)` images. The noise is
/// a pure function of `(seed, batch_index)`; level 0 returns the input.
pub fn pagan_augment_input(batch: &Tensor, level: usize, seed: u64, batch_index: u64) -> Result<Tensor, ModelError> {
    if level > PAGAN_LEVEL_CAP {
        return Err(ModelError::PaganLevel {
            level,
            max: PAGAN_LEVEL_CAP,
        });
    }
    if level == 0 {
        return Ok(batch.shallow_clone());
    }
    let size = batch.size();
    if size.len() != 4 {
        return Err(ModelError::Shape {
            got: size,
            expected: "(n, c, h, w)".into(),
        });
    }
    let mut rng = stream(seed, "pagan-noise", batch_index);
    let count = (size[0] * level as i64 * size[2] * size[3]) as usize;
    let noise: Vec<f32> = (0..count)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let noise = Tensor::from_slice(&noise)
        .view([size[0], level as i64, size[2], size[3]])
        .to_kind(batch.kind());
    Ok(Tensor::cat(&[batch, &noise], 1))
}
