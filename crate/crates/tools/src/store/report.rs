//! Coverage reports as canonical JSON. Sparse hit maps are arrays of
//! `[obligation, count]` (and `[obligation, label, count]`) sorted by key.

use std::collections::BTreeMap;
use std::path::Path;

use manifold_core::adequacy::{CoverageParams, CoverageReport, Criterion, Provenance};
use serde::{Deserialize, Serialize};

use super::error::{Result, StoreError};
use super::json::{read_json, write_json};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportDocument {
    pub format_version: u32,
    pub criterion: Criterion,
    pub params: CoverageParams,
    pub obligation_count: u64,
    pub covered_count: u64,
    pub percent: f64,
    pub hits: Vec<(u64, u64)>,
    #[serde(default)]
    pub label_hits: Vec<(u64, usize, u64)>,
    pub provenance: Provenance,
}

impl From<&CoverageReport> for ReportDocument {
    fn from(r: &CoverageReport) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            criterion: r.criterion,
            params: r.params.clone(),
            obligation_count: r.obligation_count(),
            covered_count: r.covered_count(),
            percent: r.percent(),
            hits: r.hits().iter().map(|(&o, &c)| (o, c)).collect(),
            label_hits: r.label_hits().iter().map(|(&(o, l), &c)| (o, l, c)).collect(),
            provenance: r.provenance.clone(),
        }
    }
}

impl ReportDocument {
    pub fn into_report(self, path: &Path) -> Result<CoverageReport> {
        if self.format_version != FORMAT_VERSION {
            return Err(StoreError::format(path, format!("unsupported format version {}", self.format_version)));
        }
        let hits: BTreeMap<u64, u64> = self.hits.iter().copied().collect();
        if hits.len() != self.hits.len() {
            return Err(StoreError::format(path, "duplicate hit entries"));
        }
        let label_hits: BTreeMap<(u64, usize), u64> = self.label_hits.iter().map(|&(o, l, c)| ((o, l), c)).collect();
        let report = CoverageReport::from_parts(
            self.criterion,
            self.params,
            self.obligation_count,
            hits,
            label_hits,
            self.provenance,
        )
        .map_err(|e| StoreError::format(path, e.to_string()))?;
        if report.covered_count() != self.covered_count || report.percent() != self.percent {
            return Err(StoreError::format(path, "covered count or percent disagrees with hits"));
        }
        Ok(report)
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &CoverageReport) -> Result<()> {
    write_json(path.as_ref(), &ReportDocument::from(report))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<CoverageReport> {
    let path = path.as_ref();
    read_json::<ReportDocument>(path)?.into_report(path)
}
