use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use tch::{Kind, Tensor};

use super::layers::{batch_norm, conv_transpose2d};
use super::params::{normal_tensor, ParamStore};
use super::{ModelError, ModelSpec, INIT_STD};
use crate::rng::stream;

/// Transposed-conv generator: a 4×4 projection followed by stride-2 blocks
/// up to `image_size`, batch norm + ReLU between blocks and a final tanh.
#[derive(Debug)]
pub struct Generator {
    spec: ModelSpec,
    store: ParamStore,
    /// `(in, out)` channels per transposed conv.
    layers: Vec<(i64, i64)>,
}

fn layer_channels(spec: &ModelSpec) -> Vec<(i64, i64)> {
    let d = spec.doublings();
    let w = spec.base_width as i64;
    let mut layers = Vec::with_capacity(d + 1);
    let mut c_in = (spec.latent_dim + spec.num_classes) as i64;
    for i in 0..d {
        let c_out = w << (d - 1 - i);
        layers.push((c_in, c_out));
        c_in = c_out;
    }
    layers.push((c_in, spec.channels as i64));
    layers
}

/// Builds a freshly initialized generator: conv weights ~ N(0, 0.02), batch
/// norm scale ~ N(1, 0.02), label embedding ~ N(0, 1).
pub fn build_generator(spec: &ModelSpec, seed: u64) -> Result<Generator, ModelError> {
    spec.validate()?;
    let mut rng = stream(seed, "generator-init", 0);
    let layers = layer_channels(spec);
    let mut store = ParamStore::new();
    if spec.num_classes > 0 {
        let k = spec.num_classes as i64;
        store.insert_param("g.embed", normal_tensor(&[k, k], 1.0, &mut rng));
    }
    for (i, &(c_in, c_out)) in layers.iter().enumerate() {
        store.insert_param(&format!("g.l{i}.weight"), normal_tensor(&[c_in, c_out, 4, 4], INIT_STD, &mut rng));
        if i + 1 < layers.len() {
            store.insert_param(&format!("g.l{i}.bn.weight"), normal_tensor(&[c_out], INIT_STD, &mut rng) + 1.0);
            store.insert_param(&format!("g.l{i}.bn.bias"), Tensor::zeros([c_out], (Kind::Float, tch::Device::Cpu)));
        }
    }
    Ok(Generator {
        spec: spec.clone(),
        store,
        layers,
    })
}

impl Generator {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
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

    /// Standard-normal latent batch of shape `(n, latent_dim)`.
    pub fn sample_latent<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let values: Vec<f32> = (0..n * self.spec.latent_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Tensor::from_slice(&values).view([n as i64, self.spec.latent_dim as i64])
    }

    /// Maps `(n, latent_dim)` noise (plus `n` class indices for conditional
    /// families) to `(n, channels, size, size)` images in `[-1, 1]`.
    pub fn forward(&self, z: &Tensor, labels: Option<&Tensor>) -> Result<Tensor, ModelError> {
        let size = z.size();
        if size.len() != 2 || size[1] != self.spec.latent_dim as i64 {
            return Err(ModelError::Shape {
                got: size,
                expected: format!("(n, {})", self.spec.latent_dim),
            });
        }
        let n = size[0];
        let mut x = if self.spec.num_classes > 0 {
            let labels = labels.ok_or(ModelError::MissingLabels(self.spec.family))?;
            check_labels(labels, n, self.spec.num_classes)?;
            let emb = self.store.param("g.embed").index_select(0, labels);
            Tensor::cat(&[z, &emb], 1)
        } else {
            z.shallow_clone()
        };
        x = x.view([n, -1, 1, 1]);
        let last = self.layers.len() - 1;
        for i in 0..=last {
            let (stride, pad) = if i == 0 { (1, 0) } else { (2, 1) };
            x = conv_transpose2d(&x, self.store.param(&format!("g.l{i}.weight")), stride, pad);
            x = if i < last {
                batch_norm(
                    &x,
                    self.store.param(&format!("g.l{i}.bn.weight")),
                    self.store.param(&format!("g.l{i}.bn.bias")),
                )
                .relu()
            } else {
                x.tanh()
            };
        }
        Ok(x)
    }
}

pub(crate) fn check_labels(labels: &Tensor, n: i64, num_classes: usize) -> Result<(), ModelError> {
    let ok = labels.size() == [n]
        && labels.kind() == Kind::Int64
        && (n == 0
            || (labels.min().int64_value(&[]) >= 0 && labels.max().int64_value(&[]) < num_classes as i64));
    if ok {
        Ok(())
    } else {
        Err(ModelError::Shape {
            got: labels.size(),
            expected: format!("{n} int64 labels in 0..{num_classes}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DiscVariant, Family};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(family: Family) -> ModelSpec {
        ModelSpec {
            base_width: 4,
            latent_dim: 16,
            ..ModelSpec::new(family, DiscVariant::BatchNorm)
        }
        .with_classes(13)
    }

    /// Layer-by-layer count for the default generator, written out by hand.
    fn expected_default_params() -> i64 {
        let (z, w, c) = (100i64, 64i64, 3i64);
        let convs = [(z, 8 * w), (8 * w, 4 * w), (4 * w, 2 * w), (2 * w, w), (w, c)];
        let conv_params: i64 = convs.iter().map(|(i, o)| i * o * 4 * 4).sum();
        let bn_params: i64 = convs[..4].iter().map(|(_, o)| 2 * o).sum();
        conv_params + bn_params
    }

    #[test]
    fn default_parameter_count() {
        let g = build_generator(&ModelSpec::default(), 0).unwrap();
        assert_eq!(expected_default_params(), 3_576_704);
        assert_eq!(g.num_parameters(), 3_576_704);
        assert_eq!(build_generator(&ModelSpec::default(), 9).unwrap().num_parameters(), 3_576_704);
    }

    #[test]
    fn output_shape_and_range() {
        let spec = ModelSpec {
            base_width: 4,
            ..ModelSpec::default()
        };
        let g = build_generator(&spec, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = g.sample_latent(5, &mut rng);
        let x = g.forward(&z, None).unwrap();
        assert_eq!(x.size(), [5, 3, 64, 64]);
        assert!(x.abs().max().double_value(&[]) <= 1.0);
    }

    #[test]
    fn conditioning_changes_output() {
        let g = build_generator(&small(Family::Cgan), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = g.sample_latent(1, &mut rng).repeat([2, 1]);
        let labels = Tensor::from_slice(&[0i64, 5]);
        let x = g.forward(&z, Some(&labels)).unwrap();
        let diff = (x.get(0) - x.get(1)).abs().max().double_value(&[]);
        assert!(diff > 1e-4, "{diff}");
        assert!(matches!(g.forward(&z, None), Err(ModelError::MissingLabels(_))));
        let bad = Tensor::from_slice(&[0i64, 13]);
        assert!(g.forward(&z, Some(&bad)).is_err());
    }

    #[test]
    fn construction_is_pure_given_seed() {
        let a = build_generator(&small(Family::Dcgan), 7).unwrap();
        let b = build_generator(&small(Family::Dcgan), 7).unwrap();
        let c = build_generator(&small(Family::Dcgan), 8).unwrap();
        assert_eq!(a.store().export_params(), b.store().export_params());
        assert_ne!(a.store().export_params(), c.store().export_params());
    }

    #[test]
    fn wrong_latent_shape() {
        let g = build_generator(&small(Family::Dcgan), 0).unwrap();
        let z = Tensor::zeros([2, 3], (Kind::Float, tch::Device::Cpu));
        assert!(matches!(g.forward(&z, None), Err(ModelError::Shape { .. })));
    }

    #[test]
    fn other_resolutions() {
        let spec = ModelSpec {
            image_size: 32,
            ..small(Family::Dcgan)
        };
        let g = build_generator(&spec, 0).unwrap();
        let z = g.sample_latent(2, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(g.forward(&z, None).unwrap().size(), [2, 3, 32, 32]);
    }
}
