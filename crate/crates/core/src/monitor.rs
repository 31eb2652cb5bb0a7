//! Runtime confidence that an input lies on the learned manifold.
//!
//! An input is encoded to its posterior mean `z` and scored by the
//! geometric mean of the unit-normal kernel over its coordinates,
//! `exp(−Σ zᵢ² / 2κ)`.

use alloc::vec::Vec;

use crate::error::{ensure_finite, Error, Result};
use crate::manifold::VaeModel;
use crate::numerics::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.1;

const SCORE_BATCH: usize = 512;

/// Confidence of a latent point; in `(0, 1]`, equal to 1 only at the origin.
pub fn confidence_of_latent(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::Dimension {
            context: "latent point",
            expected: 1,
            actual: 0,
        });
    }
    ensure_finite(z, "latent point")?;
    let sq: f64 = z.iter().map(|v| v * v).sum();
    Ok(libm::exp(-0.5 / z.len() as f64 * sq))
}

/// Confidence of every row of `x` under an unconditional encoder.
pub fn confidences(x: &Tensor, encoder: &VaeModel) -> Result<Vec<f64>> {
    if encoder.is_conditional() {
        return Err(Error::Configuration("monitoring requires an unconditional encoder".into()));
    }
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows);
    let mut start = 0;
    while start < rows {
        let end = (start + SCORE_BATCH).min(rows);
        let post = encoder.encode(&x.slice_rows(start, end), None)?;
        for mu in post.mean.data().chunks_exact(encoder.latent_dim()) {
            out.push(confidence_of_latent(mu)?);
        }
        start = end;
    }
    Ok(out)
}

/// Confidence of a single input.
pub fn confidence(x: &[f64], encoder: &VaeModel) -> Result<f64> {
    Ok(confidences(&Tensor::vector(x.to_vec()), encoder)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonitorConfig {
    /// Trust threshold τ, strictly inside (0, 1).
    pub threshold: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(())
        } else {
            Err(Error::Parameter(alloc::format!(
                "monitor threshold {} outside (0, 1)",
                self.threshold
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Trusted,
    Flagged,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Trusted => "trusted",
            Verdict::Flagged => "flagged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Judgement {
    pub verdict: Verdict,
    pub confidence: f64,
}

/// A threshold over encoder confidence.
#[derive(Debug, Clone)]
pub struct Monitor<'a> {
    encoder: &'a VaeModel,
    config: MonitorConfig,
}

impl<'a> Monitor<'a> {
    pub fn new(encoder: &'a VaeModel, config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        if encoder.is_conditional() {
            return Err(Error::Configuration("monitoring requires an unconditional encoder".into()));
        }
        Ok(Self { encoder, config })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Trusted iff the score is at least τ.
    pub fn verdict(&self, confidence: f64) -> Judgement {
        let verdict = if confidence >= self.config.threshold {
            Verdict::Trusted
        } else {
            Verdict::Flagged
        };
        Judgement { verdict, confidence }
    }

    pub fn judge(&self, x: &[f64]) -> Result<Judgement> {
        Ok(self.verdict(confidence(x, self.encoder)?))
    }

    pub fn judge_batch(&self, x: &Tensor) -> Result<Vec<Judgement>> {
        Ok(confidences(x, self.encoder)?.into_iter().map(|c| self.verdict(c)).collect())
    }

    pub fn stream_stats(&self, x: &Tensor) -> Result<StreamStats> {
        let mut stats = StreamStats::default();
        for j in self.judge_batch(x)? {
            stats.push(&j);
        }
        Ok(stats)
    }
}

/// Running summary of judgements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StreamStats {
    count: u64,
    flagged: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl StreamStats {
    pub fn push(&mut self, j: &Judgement) {
        if self.count == 0 {
            self.min = j.confidence;
            self.max = j.confidence;
        } else {
            self.min = self.min.min(j.confidence);
            self.max = self.max.max(j.confidence);
        }
        self.count += 1;
        self.sum += j.confidence;
        if j.verdict == Verdict::Flagged {
            self.flagged += 1;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn flagged(&self) -> u64 {
        self.flagged
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn min(&self) -> Option<f64> {
        (self.count > 0).then_some(self.min)
    }

    pub fn max(&self) -> Option<f64> {
        (self.count > 0).then_some(self.max)
    }

    pub fn flag_rate(&self) -> Option<f64> {
        (self.count > 0).then(|| self.flagged as f64 / self.count as f64)
    }
}
