use tch::Tensor;

use super::ModelError;

/// Lower bound applied to the singular-value estimate before dividing.
pub const SIGMA_FLOOR: f64 = 1e-12;

fn normalize(x: &Tensor) -> Tensor {
    x / x.norm().clamp_min(SIGMA_FLOOR)
}

/// Divides `weight` by a power-iteration estimate of its largest singular
/// value. The weight is viewed as `(out, fan_in)`; `u` (length `out`) is the
/// left singular-vector estimate and is advanced in place so later calls
/// continue from it. Gradients flow through the estimate, not through `u`.
pub fn spectral_normalize(weight: &Tensor, iters: usize, u: &mut Tensor) -> Result<Tensor, ModelError> {
    if iters == 0 {
        return Err(ModelError::NoIterations);
    }
    let out = weight.size()[0];
    if u.size() != [out] {
        return Err(ModelError::Shape {
            got: u.size(),
            expected: format!("power-iteration vector of length {out}"),
        });
    }
    let mat = weight.reshape([out, -1]);
    let (u_next, v) = tch::no_grad(|| {
        let m = mat.detach();
        let mut u_cur = u.shallow_clone();
        let mut v = normalize(&m.tr().mv(&u_cur));
        for i in 0..iters {
            if i > 0 {
                v = normalize(&m.tr().mv(&u_cur));
            }
            let next = normalize(&m.mv(&v));
            // A zero matrix would collapse the state to zero for good.
            if next.norm().double_value(&[]) > 0.0 {
                u_cur = next;
            }
        }
        (u_cur, v)
    });
    let sigma = u_next.dot(&mat.mv(&v)).clamp_min(SIGMA_FLOOR);
    *u = u_next;
    Ok(weight / sigma)
}
