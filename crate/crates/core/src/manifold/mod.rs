//! Variational autoencoders as the learned manifold: training, encoding,
//! decoding and two-stage conditional generation.

pub mod train;
pub mod two_stage;
pub mod vae;

pub use train::{train_vae, EpochReport, TrainedVae, VaeConfig, VaeTrainer};
pub use two_stage::{train_two_stage, TrainedTwoStage, TwoStageConfig, TwoStageVae};
pub use vae::{
    kl_divergence, reparameterize, LatentPoint, Likelihood, Posterior, Stage, VaeArchitecture, VaeGrads,
    VaeLoss, VaeModel,
};
