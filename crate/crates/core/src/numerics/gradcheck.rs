//! Central finite-difference verification of analytic gradients.

use alloc::vec::Vec;

use super::network::{Activation, Network, Tape};
use super::tensor::Tensor;
use crate::error::{dim, Result};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// Models whose parameters can be read and written by flat index.
pub trait Parameters {
    fn param_count(&self) -> usize;
    fn param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
}

impl Parameters for Network {
    fn param_count(&self) -> usize {
        Network::param_count(self)
    }

    fn param(&self, index: usize) -> f64 {
        Network::param(self, index)
    }

    fn set_param(&mut self, index: usize, value: f64) {
        Network::set_param(self, index, value)
    }
}

/// `|a − n| / max(1e−12, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every parameter of `model`. Parameters are restored afterwards.
pub fn max_relative_error<M, F>(model: &mut M, analytic: &[f64], mut loss: F) -> Result<f64>
where
    M: Parameters + ?Sized,
    F: FnMut(&M) -> Result<f64>,
{
    dim("analytic gradient", model.param_count(), analytic.len())?;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = model.param(i);
        model.set_param(i, original + STEP);
        let plus = loss(model);
        model.set_param(i, original - STEP);
        let minus = loss(model);
        model.set_param(i, original);
        let numeric = (plus? - minus?) / (2.0 * STEP);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

/// Checks `net`'s backward pass for a loss on its output. `loss` returns the
/// scalar value and its gradient with respect to the network output.
pub fn gradient_check<F>(net: &Network, x: &Tensor, loss: F) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let mut tape = Tape::new();
    let out = net.forward_recorded(x, &mut tape)?;
    let (_, upstream) = loss(&out)?;
    let analytic = net.backward(&tape, &upstream)?.flatten();
    let mut probe = net.clone();
    max_relative_error(&mut probe, &analytic, |n| Ok(loss(&n.forward(x)?)?.0))
}

/// Shifts the bias of any relu unit whose pre-activation lies within `margin`
/// of the kink at zero, so that finite differences never straddle it.
/// Returns the number of units moved.
pub fn clear_relu_kinks(net: &mut Network, x: &Tensor, margin: f64) -> Result<usize> {
    let mut moved = 0;
    // Moving one layer changes everything downstream; repeat per layer.
    for li in 0..net.layers().len() {
        if net.layers()[li].activation() != Activation::Relu {
            continue;
        }
        let mut tape = Tape::new();
        net.forward_recorded(x, &mut tape)?;
        let width = net.layers()[li].out_dim();
        let pre: Vec<f64> = tape.pre_activation(li).to_vec();
        let bias = net.layers_mut()[li].bias_mut();
        for j in 0..width {
            let close = pre.iter().skip(j).step_by(width).any(|z| z.abs() < margin);
            if close {
                bias[j] += 4.0 * margin;
                moved += 1;
            }
        }
    }
    Ok(moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::loss;
    use crate::numerics::network::DenseLayer;
    use crate::rng;
    use alloc::vec;

    #[test]
    fn quadratic_loss_on_linear_net_is_exact() {
        let mut r = rng::stream(11, 0);
        let net = Network::init(4, &[(3, Activation::Identity), (2, Activation::Identity)], &mut r).unwrap();
        let x = Tensor::matrix(2, 4, vec![0.1, -0.4, 0.9, 0.3, 1.0, 0.2, -0.7, 0.5]).unwrap();
        let err = gradient_check(&net, &x, |out| {
            let v = out.data().iter().map(|o| 0.5 * o * o).sum();
            Ok((v, out.clone()))
        })
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sign_flipped_gradient_is_detected() {
        let mut r = rng::stream(12, 0);
        let net = Network::init(3, &[(4, Activation::Tanh), (2, Activation::Identity)], &mut r).unwrap();
        let x = Tensor::vector(vec![0.5, -0.2, 0.8]);
        let err = gradient_check(&net, &x, |out| {
            let v: f64 = out.data().iter().map(|o| o * o).sum();
            let g: Vec<f64> = out.data().iter().map(|o| -2.0 * o).collect();
            Ok((v, Tensor::vector(g)))
        })
        .unwrap();
        // a = -n gives |2n| / |2n|.
        assert!((err - 1.0).abs() < 1e-6, "{err}");
    }

    #[test]
    fn kl_head_on_tanh_net() {
        let mut r = rng::stream(13, 0);
        let net = Network::init(784, &[(32, Activation::Tanh), (8, Activation::Identity)], &mut r).unwrap();
        let x = Tensor::vector((0..784).map(|_| rng::uniform(&mut r, 0.05, 1.0)).collect());
        let err = gradient_check(&net, &x, |out| {
            let (kl, dm, dv) = loss::kl_standard_normal(&out.data()[..4], &out.data()[4..])?;
            let mut g = dm;
            g.extend(dv);
            Ok((kl, Tensor::vector(g)))
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn kink_clearing_moves_units_at_zero() {
        let l = DenseLayer::new(1, 2, vec![1.0, 1.0], vec![0.0, 5.0], Activation::Relu).unwrap();
        let mut net = Network::new(1, vec![l]).unwrap();
        let moved = clear_relu_kinks(&mut net, &Tensor::vector(vec![0.0]), 1e-3).unwrap();
        assert_eq!(moved, 1);
        assert!(net.layers()[0].bias()[0] > 1e-3);
    }
}
