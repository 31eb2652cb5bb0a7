//! Synthesis of labeled, fault-revealing test inputs from a two-stage
//! conditional VAE.

mod classifier;
mod search;
mod suite;

pub use classifier::{classifier_loss, train_classifier, ClassifierConfig, ModelUnderTest, Prediction};
pub use search::{fitness, hill_climb, quadratic_surrogate, FitnessWeights};
pub use suite::{
    generate_suite, Attempt, DedupArchive, GenConfig, GenStats, GenerationMode, Generator, Offer, Suite,
    SuiteBuilder, SuiteStatus, TestCase, ATTEMPT_CHUNK,
};
