use alloc::vec::Vec;

use super::vae::{Stage, VaeArchitecture, VaeModel};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Tensor};
use crate::rng::{self, streams, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VaeConfig {
    pub architecture: VaeArchitecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mean per-example loss over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochReport {
    pub stage: Stage,
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedVae {
    pub model: VaeModel,
    pub history: Vec<EpochReport>,
}

/// Mini-batch Adam trainer for one VAE.
pub struct VaeTrainer {
    model: VaeModel,
    adam: AdamState,
    batch_size: usize,
    shuffle: Rng,
    noise: Rng,
    stage: Stage,
    epoch: usize,
}

impl VaeTrainer {
    /// `stream_ids` are the (init, shuffle, noise) stream identifiers.
    pub fn new(config: &VaeConfig, stage: Stage, stream_ids: [u64; 3]) -> Result<Self> {
        config.validate()?;
        let mut init = rng::stream(config.seed, stream_ids[0]);
        let model = VaeModel::init(&config.architecture, &mut init)?;
        let adam = AdamState::new(
            AdamConfig::with_learning_rate(config.learning_rate),
            &model.param_block_lens(),
        );
        Ok(Self {
            model,
            adam,
            batch_size: config.batch_size,
            shuffle: rng::stream(config.seed, stream_ids[1]),
            noise: rng::stream(config.seed, stream_ids[2]),
            stage,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &VaeModel {
        &self.model
    }

    pub fn into_model(self) -> VaeModel {
        self.model
    }

    /// One pass over `data` in a fresh random order.
    pub fn run_epoch(&mut self, data: &Tensor, labels: Option<&[usize]>) -> Result<EpochReport> {
        let rows = data.rows();
        if rows == 0 {
            return Err(Error::Input("empty training set".into()));
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..rows).collect();
        rng::shuffle(&mut self.shuffle, &mut order);

        let (mut loss_sum, mut rec_sum, mut kl_sum) = (0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(self.batch_size).enumerate() {
            let x = data.select_rows(idx);
            let y: Option<Vec<usize>> = labels.map(|ls| idx.iter().map(|&i| ls[i]).collect());
            let step = self
                .model
                .loss(&x, y.as_deref(), &mut self.noise)
                .and_then(|l| {
                    let g_enc = l.grads.encoder.blocks();
                    let mut grads = g_enc;
                    grads.extend(l.grads.decoder.blocks());
                    let mut params = self.model.param_blocks_mut();
                    self.adam.step(&mut params, &grads)?;
                    Ok((l.total, l.reconstruction, l.kl))
                });
            let (total, rec, kl) = step.map_err(|e| match e {
                Error::NumericFailure(msg) => Error::NumericFailure(alloc::format!(
                    "{msg} (stage {:?}, epoch {}, batch {b})",
                    self.stage,
                    self.epoch
                )),
                other => other,
            })?;
            let n = idx.len() as f64;
            loss_sum += total * n;
            rec_sum += rec * n;
            kl_sum += kl * n;
        }
        let n = rows as f64;
        Ok(EpochReport {
            stage: self.stage,
            epoch: self.epoch,
            loss: loss_sum / n,
            reconstruction: rec_sum / n,
            kl: kl_sum / n,
        })
    }
}

fn check_dataset(data: &Tensor, labels: Option<&[usize]>, config: &VaeConfig) -> Result<()> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(Error::Input("empty training set".into()));
    }
    let arch = &config.architecture;
    match (arch.conditional, labels) {
        (true, None) => return Err(Error::Conditioning("conditional training requires labels".into())),
        (false, Some(_)) => return Err(Error::Conditioning("unconditional training takes no labels".into())),
        (true, Some(ls)) if ls.len() != data.rows() => {
            return Err(Error::Input(alloc::format!("{} labels for {} images", ls.len(), data.rows())))
        }
        _ => {}
    }
    Ok(())
}

/// Trains one VAE. `on_epoch` sees every epoch's mean loss as it completes.
pub fn train_vae(
    data: &Tensor,
    labels: Option<&[usize]>,
    config: &VaeConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainedVae> {
    check_dataset(data, labels, config)?;
    let mut trainer = VaeTrainer::new(config, Stage::First, [streams::INIT, streams::SHUFFLE, streams::NOISE])?;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let report = trainer.run_epoch(data, labels)?;
        on_epoch(&report);
        history.push(report);
    }
    Ok(TrainedVae {
        model: trainer.into_model(),
        history,
    })
}
