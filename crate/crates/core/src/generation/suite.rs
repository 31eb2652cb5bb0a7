use alloc::vec;
use alloc::vec::Vec;

use super::classifier::{ModelUnderTest, Prediction};
use super::search::{fitness, hill_climb, FitnessWeights};
use crate::error::{dim, Error, Result};
use crate::manifold::{LatentPoint, Stage, TwoStageVae};
use crate::numerics::Tensor;
use crate::rng::{self, streams};

/// Attempts are evaluated in fixed blocks of this many consecutive indices.
pub const ATTEMPT_CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GenerationMode {
    Random,
    Search,
}

impl core::str::FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "search" => Ok(Self::Search),
            other => Err(Error::Parameter(alloc::format!("unknown generation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenConfig {
    /// Number of fault-revealing cases wanted.
    pub count: usize,
    /// Minimum latent distance between accepted cases of one label.
    pub dedup_distance: f64,
    pub max_attempts: u64,
    pub mode: GenerationMode,
    pub weights: FitnessWeights,
    pub search_steps: usize,
    pub step_scale: f64,
    pub seed: u64,
}

impl GenConfig {
    pub const DEFAULT_DEDUP_DISTANCE: f64 = 3.0;

    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            dedup_distance: Self::DEFAULT_DEDUP_DISTANCE,
            max_attempts: 1000 * count as u64,
            mode: GenerationMode::Random,
            weights: FitnessWeights::default(),
            search_steps: 20,
            step_scale: 0.25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Parameter("test count must be at least 1".into()));
        }
        if !(self.dedup_distance > 0.0) {
            return Err(Error::Parameter("dedup distance must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Parameter("max attempts must be at least 1".into()));
        }
        let w = self.weights;
        if !(w.fault >= 0.0 && w.realism >= 0.0 && w.fault.is_finite() && w.realism.is_finite()) {
            return Err(Error::Parameter("fitness weights must be finite and nonnegative".into()));
        }
        if self.mode == GenerationMode::Search {
            if w.fault == 0.0 && w.realism == 0.0 {
                return Err(Error::Parameter("search needs a nonzero fitness weight".into()));
            }
            if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
                return Err(Error::Parameter("step scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One sampled, decoded and classified latent point.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub index: u64,
    pub expected: usize,
    pub latent: Vec<f64>,
    pub input: Vec<f64>,
    pub prediction: Prediction,
}

impl Attempt {
    pub fn is_fault(&self) -> bool {
        self.prediction.label != self.expected
    }
}

/// A fault-revealing input with its expected label.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub attempt: u64,
    pub input: Vec<f64>,
    pub expected: usize,
    pub latent: LatentPoint,
    pub predicted: usize,
    /// Probability the model assigned to `predicted`.
    pub probability: f64,
}

impl TestCase {
    pub fn is_fault(&self) -> bool {
        self.predicted != self.expected
    }
}

/// Accepted latent vectors, grouped by expected label.
#[derive(Debug, Clone, Default)]
pub struct DedupArchive {
    by_label: Vec<Vec<Vec<f64>>>,
}

impl DedupArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// True iff an archived vector with the same label lies closer than
    /// `threshold`.
    pub fn is_duplicate(&self, u: &[f64], label: usize, threshold: f64) -> bool {
        let limit = threshold * threshold;
        self.by_label.get(label).is_some_and(|us| {
            us.iter()
                .any(|v| crate::numerics::linalg::squared_distance(u, v) < limit)
        })
    }

    pub fn insert(&mut self, u: Vec<f64>, label: usize) {
        if self.by_label.len() <= label {
            self.by_label.resize_with(label + 1, Vec::new);
        }
        self.by_label[label].push(u);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenStats {
    pub attempts: u64,
    pub fault_attempts: u64,
    pub duplicate_rejections: u64,
    pub accepted: u64,
}

impl GenStats {
    pub fn fault_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.fault_attempts as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SuiteStatus {
    Complete,
    /// The attempt budget ran out first.
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub cases: Vec<TestCase>,
    pub stats: GenStats,
    pub status: SuiteStatus,
    pub config: GenConfig,
}

impl Suite {
    /// Cases missing from the requested count.
    pub fn shortfall(&self) -> usize {
        self.config.count - self.cases.len()
    }
}

/// Draws and evaluates attempts; every attempt index owns its own random
/// stream, so any index can be evaluated independently.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    vae: &'a TwoStageVae,
    model: &'a ModelUnderTest,
    config: GenConfig,
}

impl<'a> Generator<'a> {
    pub fn new(vae: &'a TwoStageVae, model: &'a ModelUnderTest, config: GenConfig) -> Result<Self> {
        config.validate()?;
        if !vae.is_conditional() {
            return Err(Error::Conditioning("generation needs a label-conditioned model".into()));
        }
        if vae.num_classes() != model.num_classes() {
            return Err(Error::Configuration(alloc::format!(
                "generator has {} classes but the model under test has {}",
                vae.num_classes(),
                model.num_classes()
            )));
        }
        dim("model input width", vae.data_dim(), model.input_dim())
            .map_err(|e| Error::Configuration(alloc::format!("{e}")))?;
        Ok(Self { vae, model, config })
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn chunk_count(&self) -> u64 {
        self.config.max_attempts.div_ceil(ATTEMPT_CHUNK)
    }

    fn sample(&self, index: u64) -> Result<(usize, Vec<f64>)> {
        let mut r = rng::stream(self.config.seed, streams::ATTEMPT_BASE + index);
        let label = rng::below(&mut r, self.vae.num_classes());
        let mut u = vec![0.0; self.vae.latent_dim()];
        rng::fill_standard_normal(&mut r, &mut u);
        if self.config.mode == GenerationMode::Search {
            let (best, _) = hill_climb(u, self.config.search_steps, self.config.step_scale, &mut r, |v| {
                fitness(v, label, self.vae, self.model, self.config.weights)
            })?;
            u = best;
        }
        Ok((label, u))
    }

    /// Attempts of block `chunk`, in index order.
    pub fn chunk(&self, chunk: u64) -> Result<Vec<Attempt>> {
        let start = chunk * ATTEMPT_CHUNK;
        let end = (start + ATTEMPT_CHUNK).min(self.config.max_attempts);
        if start >= end {
            return Ok(Vec::new());
        }
        let k = self.vae.latent_dim();
        let mut labels = Vec::with_capacity((end - start) as usize);
        let mut latents = Vec::with_capacity((end - start) as usize * k);
        for i in start..end {
            let (l, u) = self.sample(i)?;
            labels.push(l);
            latents.extend(u);
        }
        let rows = labels.len();
        let x = self.vae.decode_batch(&Tensor::matrix(rows, k, latents.clone())?, Some(&labels))?;
        let preds = self.model.predict_batch(&x)?;
        Ok(preds
            .into_iter()
            .enumerate()
            .map(|(j, prediction)| Attempt {
                index: start + j as u64,
                expected: labels[j],
                latent: latents[j * k..(j + 1) * k].to_vec(),
                input: x.row(j).to_vec(),
                prediction,
            })
            .collect())
    }
}

/// What became of an offered attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    Accepted,
    NotFault,
    Duplicate,
    /// The builder had already finished; the attempt was not counted.
    Closed,
}

/// Serial acceptance: fault check, then de-duplication, then append.
#[derive(Debug, Clone)]
pub struct SuiteBuilder {
    config: GenConfig,
    archive: DedupArchive,
    cases: Vec<TestCase>,
    stats: GenStats,
}

impl SuiteBuilder {
    pub fn new(config: GenConfig) -> Self {
        Self {
            config,
            archive: DedupArchive::new(),
            cases: Vec::new(),
            stats: GenStats::default(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.cases.len() >= self.config.count || self.stats.attempts >= self.config.max_attempts
    }

    pub fn stats(&self) -> &GenStats {
        &self.stats
    }

    pub fn offer(&mut self, attempt: Attempt) -> Result<Offer> {
        if self.is_done() {
            return Ok(Offer::Closed);
        }
        self.stats.attempts += 1;
        if !attempt.is_fault() {
            return Ok(Offer::NotFault);
        }
        self.stats.fault_attempts += 1;
        if self
            .archive
            .is_duplicate(&attempt.latent, attempt.expected, self.config.dedup_distance)
        {
            self.stats.duplicate_rejections += 1;
            return Ok(Offer::Duplicate);
        }
        self.archive.insert(attempt.latent.clone(), attempt.expected);
        let probability = attempt.prediction.confidence();
        self.cases.push(TestCase {
            attempt: attempt.index,
            input: attempt.input,
            expected: attempt.expected,
            latent: LatentPoint::new(attempt.latent, Stage::Second)?,
            predicted: attempt.prediction.label,
            probability,
        });
        self.stats.accepted += 1;
        Ok(Offer::Accepted)
    }

    pub fn finish(self) -> Suite {
        let status = if self.cases.len() >= self.config.count {
            SuiteStatus::Complete
        } else {
            SuiteStatus::Partial
        };
        Suite {
            cases: self.cases,
            stats: self.stats,
            status,
            config: self.config,
        }
    }
}

/// Samples until `count` distinct fault-revealing cases are found or the
/// attempt budget is spent.
pub fn generate_suite(vae: &TwoStageVae, model: &ModelUnderTest, config: &GenConfig) -> Result<Suite> {
    let generator = Generator::new(vae, model, config.clone())?;
    let mut builder = SuiteBuilder::new(config.clone());
    for c in 0..generator.chunk_count() {
        for a in generator.chunk(c)? {
            builder.offer(a)?;
        }
        if builder.is_done() {
            break;
        }
    }
    Ok(builder.finish())
}
