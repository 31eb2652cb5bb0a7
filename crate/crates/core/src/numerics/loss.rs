//! Scalar losses with their gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim, Error, Result};

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Summed Bernoulli cross-entropy of `sigmoid(logits)` against `targets`,
/// with the gradient with respect to the logits.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    dim("bce targets", logits.len(), targets.len())?;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&l, &t) in logits.iter().zip(targets) {
        total += softplus(l) - t * l;
        grad.push(super::network::sigmoid(l) - t);
    }
    Ok((total, grad))
}

/// Summed squared error scaled as a Gaussian negative log-likelihood with
/// fixed `variance` (constant terms dropped), with the gradient with respect
/// to `means`.
pub fn gaussian_nll(means: &[f64], targets: &[f64], variance: f64) -> Result<(f64, Vec<f64>)> {
    dim("gaussian targets", means.len(), targets.len())?;
    let inv = 1.0 / variance;
    let mut total = 0.0;
    let grad = means
        .iter()
        .zip(targets)
        .map(|(&m, &t)| {
            let d = m - t;
            total += 0.5 * d * d * inv;
            d * inv
        })
        .collect();
    Ok((total, grad))
}

/// Closed-form `KL(N(μ, diag σ²) ‖ N(0, I))` given `μ` and `log σ²`,
/// with gradients `(dμ, d log σ²)`.
pub fn kl_standard_normal(mean: &[f64], log_var: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    dim("kl log-variance", mean.len(), log_var.len())?;
    let mut total = 0.0;
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_log_var = Vec::with_capacity(mean.len());
    for (&m, &lv) in mean.iter().zip(log_var) {
        let var = libm::exp(lv);
        total += -0.5 * (1.0 + lv - m * m - var);
        d_mean.push(m);
        d_log_var.push(0.5 * (var - 1.0));
    }
    Ok((total, d_mean, d_log_var))
}

/// Softmax of one row of logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Mean softmax cross-entropy over a batch of logit rows, with the gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], classes: usize, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    dim("cross-entropy batch", labels.len() * classes, logits.len())?;
    if labels.is_empty() {
        return Err(Error::Input("cross-entropy over an empty batch".into()));
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Input(alloc::format!("label {y} outside {classes} classes")));
        }
        let row = &logits[i * classes..(i + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + libm::log(row.iter().map(|&l| libm::exp(l - max)).sum::<f64>());
        total += log_sum - row[y];
        for (j, g) in grad[i * classes..(i + 1) * classes].iter_mut().enumerate() {
            let p = libm::exp(row[j] - log_sum);
            *g = (p - if j == y { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}
