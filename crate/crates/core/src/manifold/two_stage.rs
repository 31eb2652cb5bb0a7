use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::train::{EpochReport, VaeConfig, VaeTrainer};
use super::vae::{LatentPoint, Likelihood, Stage, VaeModel};
use crate::error::{dim, Error, Result};
use crate::numerics::Tensor;
use crate::rng::{self, streams};

/// A first-stage VAE over the data and a second-stage VAE over the
/// first stage's latent codes. Sampling `u ~ N(0, I)` through the second
/// decoder gives first-stage codes distributed like encoded data.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageVae {
    stage1: VaeModel,
    stage2: VaeModel,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwoStageConfig {
    pub stage1: VaeConfig,
    pub stage2: VaeConfig,
}

impl TwoStageConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        let (a, b) = (&self.stage1.architecture, &self.stage2.architecture);
        dim("second-stage data width", a.latent_dim, b.data_dim)?;
        if a.conditional != b.conditional || (a.conditional && a.num_classes != b.num_classes) {
            return Err(Error::Configuration("both stages must share conditioning".into()));
        }
        if matches!(b.likelihood, Likelihood::Bernoulli) {
            return Err(Error::Configuration(
                "second-stage data are unbounded latent codes; use a gaussian likelihood".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTwoStage {
    pub model: TwoStageVae,
    pub history: Vec<EpochReport>,
}

impl TwoStageVae {
    pub fn new(stage1: VaeModel, stage2: VaeModel) -> Result<Self> {
        dim("second-stage data width", stage1.latent_dim(), stage2.data_dim())?;
        if stage1.is_conditional() != stage2.is_conditional()
            || (stage1.is_conditional() && stage1.num_classes() != stage2.num_classes())
        {
            return Err(Error::Configuration("both stages must share conditioning".into()));
        }
        Ok(Self { stage1, stage2 })
    }

    pub fn stage1(&self) -> &VaeModel {
        &self.stage1
    }

    pub fn stage2(&self) -> &VaeModel {
        &self.stage2
    }

    pub fn is_conditional(&self) -> bool {
        self.stage1.is_conditional()
    }

    pub fn num_classes(&self) -> usize {
        self.stage1.num_classes()
    }

    pub fn data_dim(&self) -> usize {
        self.stage1.data_dim()
    }

    /// Second-stage latent width.
    pub fn latent_dim(&self) -> usize {
        self.stage2.latent_dim()
    }

    /// `u → ẑ → x̂` through both decoders.
    pub fn decode(&self, u: &LatentPoint, label: Option<usize>) -> Result<Tensor> {
        if u.stage() != Stage::Second {
            return Err(Error::Configuration("expected a second-stage latent point".into()));
        }
        let z = self.stage2.decode_point(u, label)?;
        let z = LatentPoint::new(z.into_data(), Stage::First)?;
        self.stage1.decode_point(&z, label)
    }

    /// Batched `u → x̂`; `u` is `n × κ₂`.
    pub fn decode_batch(&self, u: &Tensor, labels: Option<&[usize]>) -> Result<Tensor> {
        let z = self.stage2.decode(u, labels)?;
        self.stage1.decode(&z, labels)
    }

    /// Draws `u ~ N(0, I)` and decodes it under `label`.
    pub fn generate<R: RngCore + ?Sized>(&self, label: Option<usize>, rng: &mut R) -> Result<(Tensor, LatentPoint)> {
        self.check_label(label)?;
        let mut u = vec![0.0; self.latent_dim()];
        rng::fill_standard_normal(rng, &mut u);
        let u = LatentPoint::new(u, Stage::Second)?;
        let x = self.decode(&u, label)?;
        Ok((x, u))
    }

    fn check_label(&self, label: Option<usize>) -> Result<()> {
        match (self.is_conditional(), label) {
            (true, Some(l)) if l < self.num_classes() => Ok(()),
            (true, Some(l)) => Err(Error::Conditioning(alloc::format!(
                "label {l} outside {} classes",
                self.num_classes()
            ))),
            (true, None) => Err(Error::Conditioning("conditional model requires a label".into())),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Conditioning("unconditional model takes no label".into())),
        }
    }
}

/// Trains stage 1 on the data, then stage 2 on fresh first-stage posterior
/// samples drawn every epoch, with the same labels.
pub fn train_two_stage(
    data: &Tensor,
    labels: Option<&[usize]>,
    config: &TwoStageConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainedTwoStage> {
    config.validate()?;
    let first = super::train::train_vae(data, labels, &config.stage1, &mut on_epoch)?;
    let stage1 = first.model;
    let mut history = first.history;

    let posterior = stage1.encode(data, labels)?;
    let sd: Vec<f64> = posterior.variance.data().iter().map(|&v| libm::sqrt(v)).collect();
    let mut sampler = rng::stream(config.stage2.seed, streams::STAGE2_DATA);
    let mut trainer = VaeTrainer::new(
        &config.stage2,
        Stage::Second,
        [streams::STAGE2_INIT, streams::STAGE2_SHUFFLE, streams::STAGE2_NOISE],
    )?;
    let rows = data.rows();
    let k = stage1.latent_dim();
    let mut codes = vec![0.0; rows * k];
    for _ in 0..config.stage2.epochs {
        rng::fill_standard_normal(&mut sampler, &mut codes);
        for ((c, &m), &s) in codes.iter_mut().zip(posterior.mean.data()).zip(&sd) {
            *c = m + s * *c;
        }
        let z = Tensor::matrix(rows, k, codes.clone())?;
        let report = trainer.run_epoch(&z, labels)?;
        on_epoch(&report);
        history.push(report);
    }
    Ok(TrainedTwoStage {
        model: TwoStageVae::new(stage1, trainer.into_model())?,
        history,
    })
}
