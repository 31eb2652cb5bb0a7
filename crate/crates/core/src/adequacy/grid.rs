use alloc::vec::Vec;

use crate::error::{dim, Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile by bisection on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(alloc::format!("quantile level {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return normal_quantile(1.0 - p).map(|q| -q);
    }
    let (mut lo, mut hi) = (-40.0f64, 0.0f64);
    // 200 halvings from width 40 reach adjacent doubles long before the loop ends.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = (normal_cdf(lo) - p).abs();
    let b = (normal_cdf(hi) - p).abs();
    Ok(if a < b { lo } else { hi })
}

/// Equal-probability partition of each latent axis under the unit normal
/// prior. The same `k − 1` cut points apply to every dimension.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SectionGrid {
    latent_dim: usize,
    sections: usize,
    cuts: Vec<f64>,
}

/// Section index per latent dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CombinationKey {
    sections: Vec<u32>,
}

impl CombinationKey {
    pub fn new(sections: Vec<u32>) -> Self {
        Self { sections }
    }

    pub fn sections(&self) -> &[u32] {
        &self.sections
    }

    /// `Σ sections[i] · k^i`.
    pub fn index(&self, k: usize) -> u64 {
        self.sections
            .iter()
            .rev()
            .fold(0u64, |acc, &s| acc * k as u64 + u64::from(s))
    }

    pub fn from_index(mut index: u64, k: usize, latent_dim: usize) -> Self {
        let sections = (0..latent_dim)
            .map(|_| {
                let s = (index % k as u64) as u32;
                index /= k as u64;
                s
            })
            .collect();
        Self { sections }
    }
}

impl SectionGrid {
    pub fn new(latent_dim: usize, sections: usize) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Parameter("latent dimension must be positive".into()));
        }
        if sections < 2 {
            return Err(Error::Parameter(alloc::format!("need at least 2 sections, got {sections}")));
        }
        if sections > u32::MAX as usize {
            return Err(Error::Parameter("too many sections".into()));
        }
        let cuts = (1..sections)
            .map(|j| normal_quantile(j as f64 / sections as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            latent_dim,
            sections,
            cuts,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    /// Ascending cut points `Φ⁻¹(j/k)`, `j = 1..k−1`.
    pub fn boundaries(&self) -> &[f64] {
        &self.cuts
    }

    /// `k^κ`, or an error if it does not fit in `u64`.
    pub fn obligation_count(&self) -> Result<u64> {
        checked_pow(self.sections, self.latent_dim)
    }

    /// Number of cut points strictly below `v`; a value on a cut point falls
    /// in the upper section.
    pub fn section_of_value(&self, v: f64) -> u32 {
        self.cuts.partition_point(|&c| c <= v) as u32
    }

    pub fn section_of(&self, z: &[f64]) -> Result<CombinationKey> {
        dim("latent point", self.latent_dim, z.len())?;
        Ok(CombinationKey {
            sections: z.iter().map(|&v| self.section_of_value(v)).collect(),
        })
    }
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Result<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc
            .checked_mul(base as u64)
            .ok_or_else(|| Error::Parameter(alloc::format!("{base}^{exp} obligations overflow u64")))?;
    }
    Ok(acc)
}
