//! Dense feed-forward networks with reverse-mode gradients.
//!
//! Layers compute `y = act(W·x + b)` with `W` stored `out × in`, row-major.
//! Inputs are batches of rows; a rank-1 tensor is a batch of one.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use super::linalg;
use super::tensor::Tensor;
use crate::error::{dim, ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y = apply(x)`.
    /// The relu derivative at exactly zero is zero.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Parameter(alloc::format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Parameter("layer widths must be positive".into()));
        }
        dim("layer weights", in_dim * out_dim, weights.len())?;
        dim("layer bias", out_dim, bias.len())?;
        ensure_finite(&weights, "layer weights")?;
        ensure_finite(&bias, "layer bias")?;
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: RngCore + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let limit = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
        let weights = (0..in_dim * out_dim)
            .map(|_| crate::rng::uniform(rng, -limit, limit))
            .collect();
        Self::new(in_dim, out_dim, weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Pre-activations for a batch of `rows` inputs.
    fn affine(&self, rows: usize, input: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; rows * self.out_dim];
        for r in z.chunks_exact_mut(self.out_dim) {
            r.copy_from_slice(&self.bias);
        }
        linalg::matmul_bt(rows, self.in_dim, self.out_dim, input, &self.weights, 1.0, &mut z);
        z
    }
}

/// Per-layer values retained by a recorded forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    rows: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.post.is_empty()
    }

    pub fn clear(&mut self) {
        self.rows = 0;
        self.input.clear();
        self.pre.clear();
        self.post.clear();
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Pre-activations of layer `i`, `rows × out_dim`.
    pub fn pre_activation(&self, i: usize) -> &[f64] {
        &self.pre[i]
    }

    /// Outputs of layer `i`, `rows × out_dim`.
    pub fn activation(&self, i: usize) -> &[f64] {
        &self.post[i]
    }

    pub fn layer_count(&self) -> usize {
        self.post.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
    pub input: Tensor,
}

impl NetworkGrads {
    /// Parameter gradients flattened in [`Network::param`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g *= factor);
            l.bias.iter_mut().for_each(|g| *g *= factor);
        }
        self.input.data_mut().iter_mut().for_each(|g| *g *= factor);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Parameter("network input width must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Parameter("network needs at least one layer".into()));
        }
        let mut width = input_dim;
        for l in &layers {
            dim("layer input width", width, l.in_dim)?;
            width = l.out_dim;
        }
        Ok(Self { input_dim, layers })
    }

    /// Glorot-initialized stack: `widths` lists each layer's output width.
    pub fn init<R: RngCore + ?Sized>(
        input_dim: usize,
        widths: &[(usize, Activation)],
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &(out, act) in widths {
            layers.push(DenseLayer::glorot(fan_in, out, act, rng)?);
            fan_in = out;
        }
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Widths of every layer output, in order.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.out_dim).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (rows, cols) = x.batch_dims();
        dim("network input", self.input_dim, cols)?;
        Ok((rows, cols))
    }

    fn output_shape(&self, x: &Tensor, rows: usize) -> Vec<usize> {
        if x.shape().len() <= 1 {
            vec![self.output_dim()]
        } else {
            vec![rows, self.output_dim()]
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, _) = self.check_input(x)?;
        let mut current = x.data().to_vec();
        for layer in &self.layers {
            let mut z = layer.affine(rows, &current);
            let act = layer.activation;
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            current = z;
        }
        ensure_finite(&current, "network output")?;
        Tensor::new(self.output_shape(x, rows), current)
    }

    /// Forward pass that keeps every layer's pre- and post-activations in
    /// `tape` for a later [`Network::backward`].
    pub fn forward_recorded(&self, x: &Tensor, tape: &mut Tape) -> Result<Tensor> {
        let (rows, _) = self.check_input(x)?;
        tape.clear();
        tape.rows = rows;
        tape.input = x.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { &tape.input } else { &tape.post[i - 1] };
            let z = layer.affine(rows, input);
            let act = layer.activation;
            let y: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            tape.pre.push(z);
            tape.post.push(y);
        }
        let out = tape.post.last().cloned().unwrap_or_default();
        if let Err(e) = ensure_finite(&out, "network output") {
            tape.clear();
            return Err(e);
        }
        Tensor::new(self.output_shape(x, rows), out)
    }

    /// Gradients given `upstream = dL/d(output)` for the batch on `tape`.
    pub fn backward(&self, tape: &Tape, upstream: &Tensor) -> Result<NetworkGrads> {
        self.check_tape(tape)?;
        let last = self.layers.len() - 1;
        dim("upstream gradient", tape.rows * self.output_dim(), upstream.len())?;
        let layer = &self.layers[last];
        let delta: Vec<f64> = upstream
            .data()
            .iter()
            .zip(tape.pre[last].iter().zip(&tape.post[last]))
            .map(|(&g, (&z, &y))| g * layer.activation.derivative(z, y))
            .collect();
        self.backward_from_delta(tape, delta)
    }

    /// Gradients given `dL/d(pre-activation)` of the final layer. Losses that
    /// fold the output nonlinearity in (logit cross-entropies) start here.
    pub fn backward_from_logits(&self, tape: &Tape, logit_grad: &Tensor) -> Result<NetworkGrads> {
        self.check_tape(tape)?;
        dim("logit gradient", tape.rows * self.output_dim(), logit_grad.len())?;
        self.backward_from_delta(tape, logit_grad.data().to_vec())
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.is_empty() {
            return Err(Error::State("backward requires a recorded forward pass"));
        }
        if tape.post.len() != self.layers.len() {
            return Err(Error::State("tape was recorded on a different network"));
        }
        Ok(())
    }

    fn backward_from_delta(&self, tape: &Tape, mut delta: Vec<f64>) -> Result<NetworkGrads> {
        let rows = tape.rows;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = if i == 0 { &tape.input } else { &tape.post[i - 1] };
            let mut gw = vec![0.0; layer.out_dim * layer.in_dim];
            linalg::matmul_at(layer.out_dim, rows, layer.in_dim, &delta, input, 0.0, &mut gw);
            let mut gb = vec![0.0; layer.out_dim];
            for r in delta.chunks_exact(layer.out_dim) {
                gb.iter_mut().zip(r).for_each(|(b, d)| *b += d);
            }
            let mut gx = vec![0.0; rows * layer.in_dim];
            linalg::matmul(rows, layer.out_dim, layer.in_dim, &delta, &layer.weights, 0.0, &mut gx);
            if i > 0 {
                let prev = &self.layers[i - 1];
                for ((g, &z), &y) in gx.iter_mut().zip(&tape.pre[i - 1]).zip(&tape.post[i - 1]) {
                    *g *= prev.activation.derivative(z, y);
                }
            }
            grads.push(LayerGrads { weights: gw, bias: gb });
            delta = gx;
        }
        grads.reverse();
        for g in &grads {
            ensure_finite(&g.weights, "weight gradient")?;
            ensure_finite(&g.bias, "bias gradient")?;
        }
        ensure_finite(&delta, "input gradient")?;
        let input_shape = if rows == 1 && tape.input.len() == self.input_dim {
            vec![self.input_dim]
        } else {
            vec![rows, self.input_dim]
        };
        Ok(NetworkGrads {
            layers: grads,
            input: Tensor::new(input_shape, delta)?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weights.len() {
                return (li, true, index);
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return (li, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `index` in flattened order: layer by layer, weights then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].weights[i]
        } else {
            self.layers[l].bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].weights[i] = value;
        } else {
            self.layers[l].bias[i] = value;
        }
    }

    /// Mutable parameter blocks in the same order as [`NetworkGrads::blocks`].
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_block_lens(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect()
    }
}
