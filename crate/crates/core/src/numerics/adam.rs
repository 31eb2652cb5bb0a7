use alloc::vec;
use alloc::vec::Vec;

use super::network::{Network, NetworkGrads};
use crate::error::{dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment accumulators for a fixed list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// State congruent with parameter blocks of the given lengths.
    pub fn new(config: AdamConfig, block_lens: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network(config: AdamConfig, net: &Network) -> Self {
        Self::new(config, &net.param_block_lens())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over matching parameter and gradient blocks.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        dim("adam parameter blocks", self.first.len(), params.len())?;
        dim("adam gradient blocks", self.first.len(), grads.len())?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            dim("adam parameter block", m.len(), p.len())?;
            dim("adam gradient block", m.len(), g.len())?;
        }
        if let Some(bad) = grads.iter().flat_map(|g| g.iter()).find(|v| !v.is_finite()) {
            return Err(Error::NumericFailure(alloc::format!("non-finite gradient {bad}")));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let correction1 = 1.0 - libm::pow(beta1, t);
        let correction2 = 1.0 - libm::pow(beta2, t);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Network, grads: &NetworkGrads) -> Result<()> {
        let g = grads.blocks();
        let mut p = net.param_blocks_mut();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_bit_identical() {
        let mut params = vec![0.3, -1.7, 1e-300];
        let before = params.clone();
        let mut s = AdamState::new(AdamConfig::default(), &[3]);
        for _ in 0..5 {
            s.step(&mut [params.as_mut_slice()], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = v̂ = 1 at t = 1, so Δ = -lr / (1 + ε).
        let mut p = vec![0.0];
        let mut s = AdamState::new(AdamConfig::default(), &[1]);
        s.step(&mut [p.as_mut_slice()], &[&[1.0]]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-10, "{}", p[0]);
    }

    #[test]
    fn repeated_steps_move_against_gradient() {
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(AdamConfig::default(), &[2]);
        s.step(&mut [p.as_mut_slice()], &[&[2.0, -2.0]]).unwrap();
        let mid = p.clone();
        s.step(&mut [p.as_mut_slice()], &[&[2.0, -2.0]]).unwrap();
        assert!(mid[0] < 1.0 && p[0] < mid[0]);
        assert!(mid[1] > 1.0 && p[1] > mid[1]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(AdamConfig::default(), &[3]);
        assert!(matches!(
            s.step(&mut [p.as_mut_slice()], &[&[0.0, 0.0]]),
            Err(Error::Dimension { .. })
        ));
        assert_eq!(s.step_count(), 0);
    }
}
