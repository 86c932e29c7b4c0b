//! Functional building blocks shared by both networks.

use rand::Rng;
use tch::Tensor;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;
pub(crate) const BN_EPS: f64 = 1e-5;

pub(crate) fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: i64, pad: i64) -> Tensor {
    x.conv2d(w, b, [stride, stride], [pad, pad], [1, 1], 1)
}

pub(crate) fn conv_transpose2d(x: &Tensor, w: &Tensor, stride: i64, pad: i64) -> Tensor {
    x.conv_transpose2d(w, None::<&Tensor>, [stride, stride], [pad, pad], [0, 0], 1, [1, 1])
}

/// Batch normalization from the current batch's statistics. No running
/// averages are kept, so training and sampling normalize the same way.
pub(crate) fn batch_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Tensor {
    x.batch_norm(Some(gamma), Some(beta), None, None, true, 0.1, BN_EPS, false)
}

/// `max(x, 0.2x)`; written with `maximum` so it supports double backward.
pub(crate) fn leaky_relu(x: &Tensor) -> Tensor {
    x.maximum(&(x * LEAKY_SLOPE))
}

/// Inverted dropout with the mask drawn from `rng`.
pub(crate) fn dropout<R: Rng + ?Sized>(x: &Tensor, p: f64, rng: &mut R) -> Tensor {
    let keep = 1.0 - p;
    let n = x.numel();
    let mask: Vec<f32> = (0..n)
        .map(|_| if rng.random::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
        .collect();
    x * Tensor::from_slice(&mask).view(x.size().as_slice()).to_kind(x.kind())
}
