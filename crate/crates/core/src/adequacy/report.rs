use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Criterion {
    /// k-section manifold combination coverage.
    Mcc,
    /// t-way manifold section coverage.
    Tway,
    /// Neuron coverage.
    Nc,
    /// Neuron boundary coverage.
    Nbc,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Mcc => "mcc",
            Criterion::Tway => "tway",
            Criterion::Nc => "nc",
            Criterion::Nbc => "nbc",
        }
    }
}

impl core::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcc" => Ok(Criterion::Mcc),
            "tway" => Ok(Criterion::Tway),
            "nc" => Ok(Criterion::Nc),
            "nbc" => Ok(Criterion::Nbc),
            other => Err(Error::Parameter(alloc::format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverageParams {
    pub sections: Option<usize>,
    pub latent_dim: Option<usize>,
    pub t: Option<usize>,
    pub nc_threshold: Option<f64>,
}

/// Where a report came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub suite_id: String,
    pub model_id: String,
    pub seed: Option<u64>,
}

/// Hit counts over an obligation universe.
///
/// `label_hits` counts (obligation, class label) events when the suite's
/// labels were supplied; it feeds [`super::cramers_v_counts`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub criterion: Criterion,
    pub params: CoverageParams,
    obligation_count: u64,
    hits: BTreeMap<u64, u64>,
    label_hits: BTreeMap<(u64, usize), u64>,
    pub provenance: Provenance,
}

impl CoverageReport {
    pub fn new(criterion: Criterion, params: CoverageParams, obligation_count: u64) -> Self {
        Self {
            criterion,
            params,
            obligation_count,
            hits: BTreeMap::new(),
            label_hits: BTreeMap::new(),
            provenance: Provenance::default(),
        }
    }

    /// Rebuilds a report from stored parts, checking its invariants.
    pub fn from_parts(
        criterion: Criterion,
        params: CoverageParams,
        obligation_count: u64,
        hits: BTreeMap<u64, u64>,
        label_hits: BTreeMap<(u64, usize), u64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if let Some((&o, _)) = hits.iter().find(|(&o, &c)| c == 0 || o >= obligation_count) {
            return Err(Error::Input(alloc::format!(
                "hit entry for obligation {o} is zero or outside {obligation_count} obligations"
            )));
        }
        if let Some(((o, _), _)) = label_hits.iter().find(|(&(o, _), &c)| c == 0 || !hits.contains_key(&o)) {
            return Err(Error::Input(alloc::format!(
                "labelled hit for obligation {o} has no matching hit"
            )));
        }
        Ok(Self {
            criterion,
            params,
            obligation_count,
            hits,
            label_hits,
            provenance,
        })
    }

    pub fn record(&mut self, obligation: u64, label: Option<usize>) {
        debug_assert!(obligation < self.obligation_count);
        *self.hits.entry(obligation).or_insert(0) += 1;
        if let Some(l) = label {
            *self.label_hits.entry((obligation, l)).or_insert(0) += 1;
        }
    }

    pub fn obligation_count(&self) -> u64 {
        self.obligation_count
    }

    pub fn covered_count(&self) -> u64 {
        self.hits.len() as u64
    }

    /// `100 · covered / obligations`.
    pub fn percent(&self) -> f64 {
        if self.obligation_count == 0 {
            0.0
        } else {
            100.0 * self.covered_count() as f64 / self.obligation_count as f64
        }
    }

    pub fn hits(&self) -> &BTreeMap<u64, u64> {
        &self.hits
    }

    pub fn label_hits(&self) -> &BTreeMap<(u64, usize), u64> {
        &self.label_hits
    }

    pub fn is_covered(&self, obligation: u64) -> bool {
        self.hits.contains_key(&obligation)
    }

    /// Adds another report's counts over the same obligation universe.
    pub fn merge(&mut self, other: &CoverageReport) -> Result<()> {
        if other.criterion != self.criterion || other.obligation_count != self.obligation_count {
            return Err(Error::Configuration("cannot merge reports over different obligations".into()));
        }
        for (&o, &c) in &other.hits {
            *self.hits.entry(o).or_insert(0) += c;
        }
        for (&k, &c) in &other.label_hits {
            *self.label_hits.entry(k).or_insert(0) += c;
        }
        Ok(())
    }

    /// Cramér's V between covered obligations and class labels.
    pub fn cramers_v(&self) -> Result<f64> {
        super::assoc::cramers_v_counts(self.label_hits.iter().map(|(&(o, l), &c)| (o, l, c)))
    }
}
