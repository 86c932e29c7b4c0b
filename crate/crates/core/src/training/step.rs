use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

use super::losses::{class_cross_entropy, discriminator_bce, generator_bce, gradient_penalty, wasserstein_critic};
use super::{Adam, TrainConfig, TrainError};
use crate::models::{build_discriminator, build_generator, pagan_augment_input, Discriminator, Family, Generator, ModelSpec, ParamStore};
use crate::rng::derive_seed;

/// Generator, discriminator and their optimizers.
#[derive(Debug)]
pub struct GanPair {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
}

impl GanPair {
    pub fn new(spec: &ModelSpec, config: &TrainConfig) -> Result<Self, TrainError> {
        let (g_seed, d_seed) = Self::model_seeds(config);
        Ok(Self {
            generator: build_generator(spec, g_seed)?,
            discriminator: build_discriminator(spec, 0, d_seed)?,
            opt_g: Adam::new(config.lr_generator, config.adam_betas),
            opt_d: Adam::new(config.lr_discriminator, config.adam_betas),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.generator.spec()
    }

    pub(crate) fn model_seeds(config: &TrainConfig) -> (u64, u64) {
        (
            derive_seed(config.seed, "generator", 0),
            derive_seed(config.seed, "discriminator", 0),
        )
    }
}

/// Where a step sits in the run, for noise seeding and diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub seed: u64,
    pub epoch: usize,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss_d: f64,
    pub loss_g: f64,
    /// Gradient-penalty term (already multiplied by λ), WGAN-GP only.
    pub gp: Option<f64>,
}

fn finite(value: f64, quantity: &'static str, info: StepInfo) -> Result<f64, TrainError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(TrainError::NonFinite {
            epoch: info.epoch,
            step: info.step,
            quantity,
        })
    }
}

/// Gradients of `loss` with respect to every parameter of `store`.
fn gradients(loss: &Tensor, store: &ParamStore) -> BTreeMap<String, Tensor> {
    let (names, params): (Vec<&str>, Vec<&Tensor>) = store.params().unzip();
    let grads = Tensor::run_backward(&[loss], &params, false, false);
    names.into_iter().map(String::from).zip(grads).collect()
}

fn grad_norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads
        .values()
        .filter(|g| g.defined())
        .map(|g| g.square().sum(Kind::Double).double_value(&[]))
        .sum::<f64>()
        .sqrt()
}

fn apply(
    opt: &mut Adam,
    store: &mut ParamStore,
    loss: &Tensor,
    info: StepInfo,
    quantity: &'static str,
) -> Result<(), TrainError> {
    let grads = gradients(loss, store);
    finite(grad_norm(&grads), quantity, info)?;
    opt.step(store, &grads);
    Ok(())
}

pub(crate) fn random_labels(n: usize, num_classes: usize, rng: &mut ChaCha8Rng) -> Option<Tensor> {
    (num_classes > 0).then(|| {
        let v: Vec<i64> = (0..n).map(|_| rng.random_range(0..num_classes as i64)).collect();
        Tensor::from_slice(&v)
    })
}

/// PAGAN noise for the real (`2·step`) and generated (`2·step + 1`) inputs.
fn augment(x: &Tensor, d: &Discriminator, info: StepInfo, fake: bool) -> Result<Tensor, TrainError> {
    let index = 2 * info.step + fake as u64;
    Ok(pagan_augment_input(x, d.pagan_level(), info.seed, index)?)
}

/// Discriminator loss on already-augmented inputs (BCE families).
pub fn discriminator_loss(
    d: &mut Discriminator,
    real: &Tensor,
    real_labels: Option<&Tensor>,
    fake: &Tensor,
    fake_labels: Option<&Tensor>,
    real_label: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor, TrainError> {
    let out_real = d.forward(real, real_labels, Some(rng))?;
    let out_fake = d.forward(fake, fake_labels, Some(rng))?;
    let mut loss = discriminator_bce(&out_real.score, &out_fake.score, real_label);
    if let (Some(cr), Some(cf)) = (&out_real.class_logits, &out_fake.class_logits) {
        let (Some(rl), Some(fl)) = (real_labels, fake_labels) else {
            return Err(crate::models::ModelError::MissingLabels(Family::Acgan).into());
        };
        loss = loss + class_cross_entropy(cr, rl) + class_cross_entropy(cf, fl);
    }
    Ok(loss)
}

/// One discriminator update on a fixed generated batch; returns the loss
/// before the update.
#[allow(clippy::too_many_arguments)]
pub fn discriminator_step(
    d: &mut Discriminator,
    opt: &mut Adam,
    real: &Tensor,
    real_labels: Option<&Tensor>,
    fake: &Tensor,
    fake_labels: Option<&Tensor>,
    real_label: f64,
    rng: &mut ChaCha8Rng,
    info: StepInfo,
) -> Result<f64, TrainError> {
    let loss = discriminator_loss(d, real, real_labels, &fake.detach(), fake_labels, real_label, rng)?;
    let value = finite(loss.double_value(&[]), "discriminator loss", info)?;
    apply(opt, d.store_mut(), &loss, info, "discriminator gradient")?;
    Ok(value)
}

/// One generator update through the (current) discriminator with the
/// non-saturating objective; ACGAN adds the class term.
pub fn generator_step(
    pair: &mut GanPair,
    n: usize,
    rng: &mut ChaCha8Rng,
    info: StepInfo,
) -> Result<f64, TrainError> {
    let spec = pair.spec().clone();
    let z = pair.generator.sample_latent(n, rng);
    let labels = random_labels(n, spec.num_classes, rng);
    let fake = pair.generator.forward(&z, labels.as_ref())?;
    let fake = augment(&fake, &pair.discriminator, info, true)?;
    let out = pair.discriminator.forward(&fake, labels.as_ref(), Some(rng))?;
    let mut loss = if spec.family.is_critic() {
        -out.score.mean(Kind::Float)
    } else {
        generator_bce(&out.score)
    };
    if let (Some(c), Some(l)) = (&out.class_logits, &labels) {
        loss = loss + class_cross_entropy(c, l);
    }
    let value = finite(loss.double_value(&[]), "generator loss", info)?;
    apply(&mut pair.opt_g, pair.generator.store_mut(), &loss, info, "generator gradient")?;
    Ok(value)
}

/// Minimax step for the BCE families: one discriminator update on real
/// versus freshly generated images, then one generator update.
pub fn gan_step(
    pair: &mut GanPair,
    real: &Tensor,
    real_labels: Option<&Tensor>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    info: StepInfo,
) -> Result<StepLosses, TrainError> {
    let spec = pair.spec().clone();
    if spec.family.is_critic() {
        return Err(TrainError::InvalidConfig("gan_step does not train critic families".into()));
    }
    let n = real.size()[0] as usize;
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let real_label = config.effective_real_label(spec.family);
    let mut loss_d = 0.0;
    for _ in 0..config.effective_critic_steps(spec.family) {
        let z = pair.generator.sample_latent(n, rng);
        let fake_labels = random_labels(n, spec.num_classes, rng);
        let fake = tch::no_grad(|| pair.generator.forward(&z, fake_labels.as_ref()))?;
        let real_aug = augment(real, &pair.discriminator, info, false)?;
        let fake_aug = augment(&fake, &pair.discriminator, info, true)?;
        loss_d = discriminator_step(
            &mut pair.discriminator,
            &mut pair.opt_d,
            &real_aug,
            real_labels,
            &fake_aug,
            fake_labels.as_ref(),
            real_label,
            rng,
            info,
        )?;
    }
    let loss_g = generator_step(pair, n, rng, info)?;
    Ok(StepLosses { loss_d, loss_g, gp: None })
}

/// WGAN-GP step: `critic_steps` critic updates on the same real batch (fresh
/// noise and interpolation coefficients each time), then one generator
/// update. Reports the last critic loss and penalty.
pub fn wgan_gp_step(
    pair: &mut GanPair,
    real: &Tensor,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    info: StepInfo,
) -> Result<StepLosses, TrainError> {
    let spec = pair.spec().clone();
    if spec.family != Family::WganGp {
        return Err(TrainError::InvalidConfig("wgan_gp_step needs the WGAN-GP family".into()));
    }
    let n = real.size()[0] as usize;
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut loss_d = 0.0;
    let mut gp_value = 0.0;
    for _ in 0..config.effective_critic_steps(spec.family) {
        let z = pair.generator.sample_latent(n, rng);
        let fake = tch::no_grad(|| pair.generator.forward(&z, None))?;
        let eps: Vec<f32> = (0..n).map(|_| rng.random::<f32>()).collect();
        let eps = Tensor::from_slice(&eps);
        let d = &mut pair.discriminator;
        let real_scores = d.forward(real, None, Some(&mut *rng))?.score;
        let fake_scores = d.forward(&fake, None, Some(&mut *rng))?.score;
        let gp = gradient_penalty(
            |x| Ok(d.forward(x, None, Some(&mut *rng))?.score),
            real,
            &fake,
            &eps,
            config.gp_lambda,
        )?;
        finite(gp.grad_norms.sum(Kind::Double).double_value(&[]), "critic input-gradient norm", info)?;
        let loss = wasserstein_critic(&real_scores, &fake_scores) + &gp.penalty;
        loss_d = finite(loss.double_value(&[]), "critic loss", info)?;
        gp_value = gp.penalty.double_value(&[]);
        apply(&mut pair.opt_d, d.store_mut(), &loss, info, "critic gradient")?;
    }
    let loss_g = generator_step(pair, n, rng, info)?;
    Ok(StepLosses {
        loss_d,
        loss_g,
        gp: Some(gp_value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DiscVariant;
    use crate::models::TensorData;
    use rand::SeedableRng;

    fn tiny(family: Family, variant: DiscVariant) -> ModelSpec {
        ModelSpec {
            base_width: 4,
            latent_dim: 8,
            image_size: 32,
            ..ModelSpec::new(family, variant)
        }
        .with_classes(3)
    }

    fn real_batch(n: i64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let v: Vec<f32> = (0..n * 3 * 32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_slice(&v).view([n, 3, 32, 32])
    }

    fn info() -> StepInfo {
        StepInfo { seed: 1, epoch: 1, step: 0 }
    }

    #[test]
    fn discriminator_step_descends_on_fixed_batch() {
        let spec = tiny(Family::Dcgan, DiscVariant::BatchNorm);
        let config = TrainConfig::default();
        let mut pair = GanPair::new(&spec, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = real_batch(8);
        let z = pair.generator.sample_latent(8, &mut rng);
        let fake = tch::no_grad(|| pair.generator.forward(&z, None)).unwrap();
        let before = discriminator_step(
            &mut pair.discriminator,
            &mut pair.opt_d,
            &real,
            None,
            &fake,
            None,
            0.9,
            &mut rng,
            info(),
        )
        .unwrap();
        let after = discriminator_loss(&mut pair.discriminator, &real, None, &fake, None, 0.9, &mut rng)
            .unwrap()
            .double_value(&[]);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn every_family_takes_a_step() {
        let config = TrainConfig {
            critic_steps: Some(2),
            ..TrainConfig::default()
        };
        for family in Family::ALL {
            let spec = tiny(family, DiscVariant::SpectralNorm);
            let mut pair = GanPair::new(&spec, &config).unwrap();
            if family == Family::Pagan {
                pair.discriminator.grow(1).unwrap();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let labels = spec.family.is_conditional().then(|| Tensor::from_slice(&[0i64, 1, 2, 0]));
            let g_before = TensorData::from_tensor(pair.generator.store().param("g.l0.weight"));
            let losses = if family.is_critic() {
                wgan_gp_step(&mut pair, &real_batch(4), &config, &mut rng, info()).unwrap()
            } else {
                gan_step(&mut pair, &real_batch(4), labels.as_ref(), &config, &mut rng, info()).unwrap()
            };
            assert!(losses.loss_d.is_finite() && losses.loss_g.is_finite());
            assert_eq!(losses.gp.is_some(), family.is_critic());
            let g_after = TensorData::from_tensor(pair.generator.store().param("g.l0.weight"));
            assert_ne!(g_before, g_after, "{family}");
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let spec = tiny(Family::Dcgan, DiscVariant::Dropout);
        let config = TrainConfig::default();
        let run = || {
            let mut pair = GanPair::new(&spec, &config).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (0..3)
                .map(|s| {
                    let i = StepInfo { step: s, ..info() };
                    gan_step(&mut pair, &real_batch(4), None, &config, &mut rng, i).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn diverging_rates_are_reported_with_position() {
        let spec = tiny(Family::Dcgan, DiscVariant::BatchNorm);
        let config = TrainConfig {
            lr_discriminator: 1e30,
            lr_generator: 1e30,
            ..TrainConfig::default()
        };
        let mut pair = GanPair::new(&spec, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut result = Ok(());
        for s in 0..20 {
            let i = StepInfo { seed: 1, epoch: 3, step: s };
            if let Err(e) = gan_step(&mut pair, &real_batch(4), None, &config, &mut rng, i) {
                result = Err(e);
                break;
            }
        }
        match result {
            Err(TrainError::NonFinite { epoch: 3, .. }) => {}
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn wrong_step_for_family() {
        let config = TrainConfig::default();
        let mut pair = GanPair::new(&tiny(Family::Dcgan, DiscVariant::BatchNorm), &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(wgan_gp_step(&mut pair, &real_batch(2), &config, &mut rng, info()).is_err());
        let mut pair = GanPair::new(&tiny(Family::WganGp, DiscVariant::BatchNorm), &config).unwrap();
        assert!(gan_step(&mut pair, &real_batch(2), None, &config, &mut rng, info()).is_err());
    }
}
