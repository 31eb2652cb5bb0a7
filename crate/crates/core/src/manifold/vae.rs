use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{dim, ensure_finite, Error, Result};
use crate::numerics::gradcheck::Parameters;
use crate::numerics::loss;
use crate::numerics::{Activation, Network, NetworkGrads, Tape, Tensor};
use crate::rng;

/// Output distribution of the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Likelihood {
    /// Per-pixel Bernoulli on `[0, 1]` data; the decoder ends in a sigmoid.
    Bernoulli,
    /// Fixed-variance Gaussian on unbounded data; the decoder ends linear.
    Gaussian { variance: f64 },
}

impl Likelihood {
    fn output_activation(self) -> Activation {
        match self {
            Likelihood::Bernoulli => Activation::Sigmoid,
            Likelihood::Gaussian { .. } => Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Stage {
    First,
    Second,
}

/// A coordinate vector in a stage's latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint {
    values: Vec<f64>,
    stage: Stage,
}

impl LatentPoint {
    pub fn new(values: Vec<f64>, stage: Stage) -> Result<Self> {
        ensure_finite(&values, "latent point")?;
        Ok(Self { values, stage })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Shape of a VAE before training.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VaeArchitecture {
    pub data_dim: usize,
    pub latent_dim: usize,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub conditional: bool,
    pub num_classes: usize,
    pub likelihood: Likelihood,
}

impl VaeArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::Parameter("data dimension must be positive".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Parameter("latent dimension must be positive".into()));
        }
        if self.conditional && self.num_classes < 2 {
            return Err(Error::Parameter("a conditional model needs at least two classes".into()));
        }
        if let Likelihood::Gaussian { variance } = self.likelihood {
            if !(variance > 0.0 && variance.is_finite()) {
                return Err(Error::Parameter("gaussian variance must be positive".into()));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::Parameter("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder/decoder pair. The encoder emits `2κ` values per row: the posterior
/// mean followed by the posterior log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder: Network,
    decoder: Network,
    latent_dim: usize,
    data_dim: usize,
    conditional: bool,
    num_classes: usize,
    likelihood: Likelihood,
}

/// Posterior parameters for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `n × κ`.
    pub mean: Tensor,
    /// `n × κ`, strictly positive.
    pub variance: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub encoder: NetworkGrads,
    pub decoder: NetworkGrads,
}

impl VaeGrads {
    /// Encoder gradients then decoder gradients, matching [`Parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        v.extend(self.decoder.flatten());
        v
    }
}

/// Batch-mean loss terms and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub grads: VaeGrads,
}

impl VaeModel {
    pub fn new(
        encoder: Network,
        decoder: Network,
        latent_dim: usize,
        data_dim: usize,
        conditional: bool,
        num_classes: usize,
        likelihood: Likelihood,
    ) -> Result<Self> {
        if latent_dim == 0 || data_dim == 0 {
            return Err(Error::Parameter("latent and data dimensions must be positive".into()));
        }
        if conditional && num_classes < 2 {
            return Err(Error::Parameter("a conditional model needs at least two classes".into()));
        }
        let extra = if conditional { num_classes } else { 0 };
        dim("encoder input width", data_dim + extra, encoder.input_dim())?;
        dim("encoder output width", 2 * latent_dim, encoder.output_dim())?;
        dim("decoder input width", latent_dim + extra, decoder.input_dim())?;
        dim("decoder output width", data_dim, decoder.output_dim())?;
        let out_act = decoder.layers().last().map(|l| l.activation());
        if out_act != Some(likelihood.output_activation()) {
            return Err(Error::Configuration(alloc::format!(
                "decoder output activation must be {} for this likelihood",
                likelihood.output_activation()
            )));
        }
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
            data_dim,
            conditional,
            num_classes,
            likelihood,
        })
    }

    /// Freshly initialized model.
    pub fn init<R: RngCore + ?Sized>(arch: &VaeArchitecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let extra = if arch.conditional { arch.num_classes } else { 0 };
        let mut enc: Vec<(usize, Activation)> = arch.hidden.iter().map(|&h| (h, arch.activation)).collect();
        enc.push((2 * arch.latent_dim, Activation::Identity));
        let mut dec: Vec<(usize, Activation)> = arch.hidden.iter().rev().map(|&h| (h, arch.activation)).collect();
        dec.push((arch.data_dim, arch.likelihood.output_activation()));
        let encoder = Network::init(arch.data_dim + extra, &enc, rng)?;
        let decoder = Network::init(arch.latent_dim + extra, &dec, rng)?;
        Self::new(
            encoder,
            decoder,
            arch.latent_dim,
            arch.data_dim,
            arch.conditional,
            arch.num_classes,
            arch.likelihood,
        )
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn is_conditional(&self) -> bool {
        self.conditional
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    fn check_labels(&self, rows: usize, labels: Option<&[usize]>) -> Result<()> {
        match (self.conditional, labels) {
            (true, None) => Err(Error::Conditioning("conditional model requires labels".into())),
            (false, Some(_)) => Err(Error::Conditioning("unconditional model takes no labels".into())),
            (false, None) => Ok(()),
            (true, Some(ls)) => {
                if ls.len() != rows {
                    return Err(Error::Conditioning(alloc::format!(
                        "{} labels for {rows} rows",
                        ls.len()
                    )));
                }
                match ls.iter().find(|&&l| l >= self.num_classes) {
                    Some(l) => Err(Error::Conditioning(alloc::format!(
                        "label {l} outside {} classes",
                        self.num_classes
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    /// Appends the one-hot label block to each row when conditional.
    fn condition(&self, x: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        let (rows, cols) = x.batch_dims();
        self.check_labels(rows, labels)?;
        let Some(labels) = labels else {
            return Tensor::matrix(rows, cols, x.data().to_vec());
        };
        let width = cols + self.num_classes;
        let mut data = vec![0.0; rows * width];
        for (i, (row, &label)) in x.iter_rows().zip(labels).enumerate() {
            let out = &mut data[i * width..(i + 1) * width];
            out[..cols].copy_from_slice(row);
            out[cols + label] = 1.0;
        }
        Tensor::matrix(rows, width, data)
    }

    fn check_data(&self, x: &Tensor) -> Result<()> {
        dim("data width", self.data_dim, x.cols())?;
        match self.likelihood {
            Likelihood::Bernoulli => {
                if let Some(v) = x.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::Domain(alloc::format!("pixel value {v} outside [0, 1]")));
                }
            }
            Likelihood::Gaussian { .. } => x.ensure_finite("data")?,
        }
        Ok(())
    }

    /// Posterior mean and variance; deterministic.
    pub fn encode(&self, x: &Tensor, labels: Option<&[usize]>) -> Result<Posterior> {
        dim("data width", self.data_dim, x.cols())?;
        x.ensure_finite("encoder input")?;
        let input = self.condition(x, labels)?;
        let out = self.encoder.forward(&input)?;
        let rows = input.rows();
        let k = self.latent_dim;
        let mut mean = Vec::with_capacity(rows * k);
        let mut variance = Vec::with_capacity(rows * k);
        for r in out.iter_rows() {
            mean.extend_from_slice(&r[..k]);
            variance.extend(r[k..].iter().map(|&lv| libm::exp(lv)));
        }
        ensure_finite(&variance, "posterior variance")?;
        if variance.iter().any(|&v| v <= 0.0) {
            return Err(Error::NumericFailure("posterior variance underflowed to zero".into()));
        }
        Ok(Posterior {
            mean: Tensor::matrix(rows, k, mean)?,
            variance: Tensor::matrix(rows, k, variance)?,
        })
    }

    /// Encodes a single input to its posterior mean and variance.
    pub fn encode_point(&self, x: &[f64], label: Option<usize>) -> Result<(LatentPoint, Vec<f64>)> {
        let labels = label.map(|l| [l]);
        let p = self.encode(&Tensor::vector(x.to_vec()), labels.as_ref().map(|l| &l[..]))?;
        Ok((
            LatentPoint::new(p.mean.into_data(), Stage::First)?,
            p.variance.into_data(),
        ))
    }

    /// Decoder output for a batch of latent rows. For the Bernoulli
    /// likelihood every value lies in `(0, 1)`.
    pub fn decode(&self, z: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        dim("latent width", self.latent_dim, z.cols())?;
        z.ensure_finite("latent input")?;
        let input = self.condition(z, labels)?;
        self.decoder.forward(&input)
    }

    pub fn decode_point(&self, z: &LatentPoint, label: Option<usize>) -> Result<Tensor> {
        dim("latent width", self.latent_dim, z.len())?;
        let labels = label.map(|l| [l]);
        let out = self.decode(&Tensor::vector(z.values().to_vec()), labels.as_ref().map(|l| &l[..]))?;
        out.reshape(vec![self.data_dim])
    }

    /// Loss and gradients for a batch using the supplied standard-normal
    /// `noise` (`n × κ`) in `z = μ + σ ⊙ ε`. All terms are batch means.
    pub fn loss_with_noise(&self, x: &Tensor, labels: Option<&[usize]>, noise: &Tensor) -> Result<VaeLoss> {
        self.check_data(x)?;
        let (rows, _) = x.batch_dims();
        if rows == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let k = self.latent_dim;
        dim("noise size", rows * k, noise.len())?;
        let inv_n = 1.0 / rows as f64;

        let enc_in = self.condition(x, labels)?;
        let mut enc_tape = Tape::new();
        let enc_out = self.encoder.forward_recorded(&enc_in, &mut enc_tape)?;

        let mut mean = Vec::with_capacity(rows * k);
        let mut log_var = Vec::with_capacity(rows * k);
        let mut z = Vec::with_capacity(rows * k);
        for (r, eps) in enc_out.iter_rows().zip(noise.data().chunks_exact(k)) {
            for j in 0..k {
                let (m, lv) = (r[j], r[k + j]);
                mean.push(m);
                log_var.push(lv);
                z.push(m + libm::exp(0.5 * lv) * eps[j]);
            }
        }
        ensure_finite(&z, "reparameterized latent")?;

        let dec_in = self.condition(&Tensor::matrix(rows, k, z)?, labels)?;
        let mut dec_tape = Tape::new();
        let dec_out = self.decoder.forward_recorded(&dec_in, &mut dec_tape)?;
        let last = self.decoder.layers().len() - 1;
        let (reconstruction, mut d_logits) = match self.likelihood {
            Likelihood::Bernoulli => loss::bce_with_logits(dec_tape.pre_activation(last), x.data())?,
            Likelihood::Gaussian { variance } => loss::gaussian_nll(dec_out.data(), x.data(), variance)?,
        };
        d_logits.iter_mut().for_each(|g| *g *= inv_n);
        let dec_grads = self
            .decoder
            .backward_from_logits(&dec_tape, &Tensor::matrix(rows, self.data_dim, d_logits)?)?;

        let (kl, d_mean, d_log_var) = loss::kl_standard_normal(&mean, &log_var)?;
        let dz = &dec_grads.input;
        let dz_width = dz.cols();
        let mut upstream = vec![0.0; rows * 2 * k];
        for i in 0..rows {
            let eps = &noise.data()[i * k..(i + 1) * k];
            let dz_row = &dz.data()[i * dz_width..i * dz_width + k];
            let out = &mut upstream[i * 2 * k..(i + 1) * 2 * k];
            for j in 0..k {
                let idx = i * k + j;
                let sigma = libm::exp(0.5 * log_var[idx]);
                out[j] = dz_row[j] + d_mean[idx] * inv_n;
                out[k + j] = dz_row[j] * eps[j] * 0.5 * sigma + d_log_var[idx] * inv_n;
            }
        }
        let enc_grads = self
            .encoder
            .backward(&enc_tape, &Tensor::matrix(rows, 2 * k, upstream)?)?;

        let reconstruction = reconstruction * inv_n;
        let kl = kl * inv_n;
        let total = reconstruction + kl;
        if !total.is_finite() {
            return Err(Error::NumericFailure(alloc::format!("loss is {total}")));
        }
        Ok(VaeLoss {
            total,
            reconstruction,
            kl,
            grads: VaeGrads {
                encoder: enc_grads,
                decoder: dec_grads,
            },
        })
    }

    /// Loss with one fresh reparameterization sample per row.
    pub fn loss<R: RngCore + ?Sized>(&self, x: &Tensor, labels: Option<&[usize]>, rng: &mut R) -> Result<VaeLoss> {
        let mut noise = vec![0.0; x.rows() * self.latent_dim];
        rng::fill_standard_normal(rng, &mut noise);
        self.loss_with_noise(x, labels, &Tensor::matrix(x.rows(), self.latent_dim, noise)?)
    }

    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.param_blocks_mut();
        v.extend(self.decoder.param_blocks_mut());
        v
    }

    pub(crate) fn param_block_lens(&self) -> Vec<usize> {
        let mut v = self.encoder.param_block_lens();
        v.extend(self.decoder.param_block_lens());
        v
    }
}

impl Parameters for VaeModel {
    fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    fn param(&self, index: usize) -> f64 {
        let n = self.encoder.param_count();
        if index < n {
            self.encoder.param(index)
        } else {
            self.decoder.param(index - n)
        }
    }

    fn set_param(&mut self, index: usize, value: f64) {
        let n = self.encoder.param_count();
        if index < n {
            self.encoder.set_param(index, value)
        } else {
            self.decoder.set_param(index - n, value)
        }
    }
}

/// Closed-form KL divergence of `N(μ, diag σ²)` from the unit normal.
pub fn kl_divergence(mean: &[f64], variance: &[f64]) -> Result<f64> {
    dim("kl variance", mean.len(), variance.len())?;
    if variance.iter().any(|&v| v <= 0.0) {
        return Err(Error::Domain("variance must be positive".into()));
    }
    let log_var: Vec<f64> = variance.iter().map(|&v| libm::log(v)).collect();
    Ok(loss::kl_standard_normal(mean, &log_var)?.0)
}

/// `z = μ + σ ⊙ ε`.
pub fn reparameterize(mean: &[f64], variance: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    dim("reparameterize variance", mean.len(), variance.len())?;
    dim("reparameterize noise", mean.len(), noise.len())?;
    Ok(mean
        .iter()
        .zip(variance)
        .zip(noise)
        .map(|((&m, &v), &e)| m + libm::sqrt(v) * e)
        .collect())
}
