use tch::{Kind, Reduction, Tensor};

use super::TrainError;

fn bce_const(logits: &Tensor, target: f64) -> Tensor {
    let t = logits.full_like(target);
    logits.binary_cross_entropy_with_logits::<&Tensor>(&t, None, None, Reduction::Mean)
}

/// `BCE(D(real), real_label) + BCE(D(fake), 0)` on logits.
pub fn discriminator_bce(real_logits: &Tensor, fake_logits: &Tensor, real_label: f64) -> Tensor {
    bce_const(real_logits, real_label) + bce_const(fake_logits, 0.0)
}

/// Non-saturating generator objective `-mean log D(G(z))`.
pub fn generator_bce(fake_logits: &Tensor) -> Tensor {
    bce_const(fake_logits, 1.0)
}

/// Mean cross-entropy of ACGAN class logits against integer labels.
pub fn class_cross_entropy(class_logits: &Tensor, labels: &Tensor) -> Tensor {
    class_logits.cross_entropy_loss::<&Tensor>(labels, None, Reduction::Mean, -100, 0.0)
}

/// Critic loss without the penalty: `mean D(fake) - mean D(real)`.
pub fn wasserstein_critic(real_scores: &Tensor, fake_scores: &Tensor) -> Tensor {
    fake_scores.mean(Kind::Float) - real_scores.mean(Kind::Float)
}

/// Gradient penalty `λ·mean((‖∇D(x̂)‖₂ − 1)²)` and the per-sample norms.
#[derive(Debug)]
pub struct GradientPenalty {
    pub penalty: Tensor,
    pub grad_norms: Tensor,
}

/// Evaluates the penalty on `x̂ = ε·real + (1−ε)·fake` with `eps` holding one
/// coefficient per sample. The graph is kept so the penalty can itself be
/// differentiated with respect to the critic's parameters.
pub fn gradient_penalty<F>(
    mut critic: F,
    real: &Tensor,
    fake: &Tensor,
    eps: &Tensor,
    lambda: f64,
) -> Result<GradientPenalty, TrainError>
where
    F: FnMut(&Tensor) -> Result<Tensor, TrainError>,
{
    let n = real.size()[0];
    let mut shape = vec![n];
    shape.extend(std::iter::repeat_n(1, real.dim() - 1));
    let e = eps.view(shape.as_slice());
    let x_hat: Tensor = &e * real.detach() + (1.0 - &e) * fake.detach();
    let x_hat = x_hat.set_requires_grad(true);
    let scores = critic(&x_hat)?;
    let grads = Tensor::run_backward(&[scores.sum(scores.kind())], &[&x_hat], true, true);
    let grad_norms = grads[0]
        .flatten(1, -1)
        .norm_scalaropt_dim(2.0, [1i64].as_slice(), false);
    let penalty = (&grad_norms - 1.0).square().mean(grad_norms.kind()) * lambda;
    Ok(GradientPenalty { penalty, grad_norms })
}
