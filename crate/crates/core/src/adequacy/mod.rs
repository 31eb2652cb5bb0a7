//! Test adequacy: coverage of latent section combinations, structural
//! neuron baselines, and obligation/label association.

mod assoc;
mod grid;
mod mcc;
mod neuron;
mod report;

pub use assoc::{cramers_v, cramers_v_counts};
pub use grid::{normal_cdf, normal_quantile, CombinationKey, SectionGrid};
pub use mcc::{mcc_measure, tway_measure};
pub use neuron::{
    hidden_widths, nbc_measure, nc_measure, profile_activations, ActivationProfile, DEFAULT_NC_THRESHOLD,
};
pub use report::{CoverageParams, CoverageReport, Criterion, Provenance};
