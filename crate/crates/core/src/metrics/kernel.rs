use nalgebra::DMatrix;

use super::MetricsError;

/// Sum of the cubic polynomial kernel over all pairs, optionally skipping the
/// diagonal (for the within-set terms).
fn kernel_sum(a: &DMatrix<f64>, b: &DMatrix<f64>, skip_diagonal: bool) -> f64 {
    let d = a.ncols() as f64;
    let gram = a * b.transpose();
    let mut total = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            if skip_diagonal && i == j {
                continue;
            }
            total += (gram[(i, j)] / d + 1.0).powi(3);
        }
    }
    total
}

/// Unbiased squared MMD with kernel `k(x, y) = (xᵀy / d + 1)³`. Can be
/// slightly negative when both sets come from one distribution.
pub fn kid(real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let (n, m) = (real.nrows(), fake.nrows());
    if n < 2 || m < 2 {
        return Err(MetricsError::TooFewSamples { need: 2, got: n.min(m) });
    }
    if real.ncols() != fake.ncols() {
        return Err(MetricsError::DimensionMismatch(real.ncols(), fake.ncols()));
    }
    let (nf, mf) = (n as f64, m as f64);
    let xx = kernel_sum(real, real, true) / (nf * (nf - 1.0));
    let yy = kernel_sum(fake, fake, true) / (mf * (mf - 1.0));
    let xy = kernel_sum(real, fake, false) / (nf * mf);
    let value = xx + yy - 2.0 * xy;
    if !value.is_finite() {
        return Err(MetricsError::NonFinite("KID"));
    }
    Ok(value)
}

/// `exp(mean_i KL(p_i ‖ p̄))` for rows of class probabilities.
pub fn inception_score(probs: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let n = probs.nrows();
    if n == 0 {
        return Err(MetricsError::TooFewSamples { need: 1, got: 0 });
    }
    for (row, p) in probs.row_iter().enumerate() {
        let valid = p.iter().all(|v| v.is_finite() && *v >= 0.0) && (p.sum() - 1.0).abs() <= 1e-6;
        if !valid {
            return Err(MetricsError::InvalidProbabilities { row });
        }
    }
    let marginal = probs.row_mean();
    let mut kl_total = 0.0;
    for p in probs.row_iter() {
        for (pk, qk) in p.iter().zip(marginal.iter()) {
            if *pk > 0.0 {
                kl_total += pk * (pk / qk).ln();
            }
        }
    }
    Ok((kl_total / n as f64).exp())
}
