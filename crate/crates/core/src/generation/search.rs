use alloc::vec::Vec;

use rand_core::RngCore;

use super::classifier::ModelUnderTest;
use crate::error::Result;
use crate::manifold::TwoStageVae;
use crate::monitor::confidence_of_latent;
use crate::numerics::Tensor;
use crate::rng;

/// Weights of the fault and realism terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitnessWeights {
    pub fault: f64,
    pub realism: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            fault: 1.0,
            realism: 1.0,
        }
    }
}

/// `w_fault · (1 − p(ŷ | decode(u, ŷ))) + w_real · conf(u)`; higher is better.
pub fn fitness(
    u: &[f64],
    expected: usize,
    vae: &TwoStageVae,
    model: &ModelUnderTest,
    weights: FitnessWeights,
) -> Result<f64> {
    let x = vae.decode_batch(&Tensor::matrix(1, u.len(), u.to_vec())?, Some(&[expected]))?;
    let p = model.predict(x.data())?;
    Ok(weights.fault * (1.0 - p.probabilities[expected]) + weights.realism * confidence_of_latent(u)?)
}

/// `−‖u‖²` and its gradient; a smooth stand-in objective for exercising
/// the search.
pub fn quadratic_surrogate(u: &[f64]) -> (f64, Vec<f64>) {
    let value = -u.iter().map(|v| v * v).sum::<f64>();
    (value, u.iter().map(|v| -2.0 * v).collect())
}

/// Stochastic hill climbing: `steps` Gaussian proposals of scale
/// `step_scale` around the incumbent, each kept only if it scores strictly
/// higher. Returns the best point and its score.
pub fn hill_climb<R: RngCore + ?Sized>(
    start: Vec<f64>,
    steps: usize,
    step_scale: f64,
    rng: &mut R,
    mut score: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, f64)> {
    let mut best = start;
    let mut best_score = score(&best)?;
    let mut proposal = alloc::vec![0.0; best.len()];
    for _ in 0..steps {
        rng::fill_standard_normal(rng, &mut proposal);
        for (p, &b) in proposal.iter_mut().zip(&best) {
            *p = b + step_scale * *p;
        }
        let s = score(&proposal)?;
        if s > best_score {
            best_score = s;
            core::mem::swap(&mut best, &mut proposal);
        }
    }
    Ok((best, best_score))
}
