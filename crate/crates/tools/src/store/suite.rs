//! Suite directories: `tests.mten` (inputs, f32), `latents.mten` (second-stage
//! codes, f64), `labels.csv` and `meta.json`.

use std::fmt::Write as _;
use std::path::Path;

use manifold_core::generation::{GenConfig, GenStats, Suite, SuiteStatus, TestCase};
use manifold_core::manifold::{LatentPoint, Stage};
use manifold_core::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::{Result, StoreError};
use super::fs::{create_dir, read_bytes, write_atomic};
use super::json::{read_json, significant, write_json};
use super::tensor_file::{read_tensor, write_tensor, DType};

pub const INPUTS: &str = "tests.mten";
pub const LATENTS: &str = "latents.mten";
pub const LABELS: &str = "labels.csv";
pub const META: &str = "meta.json";
const LABELS_HEADER: &str = "index,expected,predicted,prob";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SuiteMeta {
    pub format_version: u32,
    pub config: GenConfig,
    pub stats: GenStats,
    pub fault_rate: f64,
    pub status: SuiteStatus,
    pub cases: usize,
    pub shortfall: usize,
    pub data_dim: usize,
    pub latent_dim: usize,
    /// Attempt index that produced each case.
    pub attempts: Vec<u64>,
    #[serde(default)]
    pub provenance: Value,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseRow {
    pub index: usize,
    pub expected: usize,
    pub predicted: usize,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteFiles {
    pub inputs: Tensor,
    pub latents: Tensor,
    pub rows: Vec<CaseRow>,
    pub meta: SuiteMeta,
}

impl SuiteFiles {
    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.expected).collect()
    }

    /// Rebuilds the in-memory suite. Inputs carry the f32 precision they
    /// were stored with.
    pub fn to_suite(&self) -> Result<Suite> {
        if self.meta.attempts.len() != self.rows.len() {
            return Err(StoreError::format(META, "attempt list length differs from the case count"));
        }
        let cases = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(TestCase {
                    attempt: self.meta.attempts[i],
                    input: self.inputs.row(i).to_vec(),
                    expected: r.expected,
                    latent: LatentPoint::new(self.latents.row(i).to_vec(), Stage::Second)?,
                    predicted: r.predicted,
                    probability: r.probability,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Suite {
            cases,
            stats: self.meta.stats,
            status: self.meta.status,
            config: self.meta.config.clone(),
        })
    }
}

pub fn write_suite(
    dir: impl AsRef<Path>,
    suite: &Suite,
    data_dim: usize,
    latent_dim: usize,
    provenance: &Value,
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let n = suite.cases.len();
    let mut inputs = Vec::with_capacity(n * data_dim);
    let mut latents = Vec::with_capacity(n * latent_dim);
    let mut csv = String::from(LABELS_HEADER);
    csv.push('\n');
    for (i, c) in suite.cases.iter().enumerate() {
        if c.input.len() != data_dim || c.latent.len() != latent_dim {
            return Err(StoreError::format(dir, format!("case {i} has the wrong width")));
        }
        inputs.extend_from_slice(&c.input);
        latents.extend_from_slice(c.latent.values());
        let _ = writeln!(csv, "{i},{},{},{}", c.expected, c.predicted, significant(c.probability, 9));
    }
    write_tensor(dir.join(INPUTS), &Tensor::matrix(n, data_dim, inputs)?, DType::F32)?;
    write_tensor(dir.join(LATENTS), &Tensor::matrix(n, latent_dim, latents)?, DType::F64)?;
    write_atomic(&dir.join(LABELS), csv.as_bytes())?;
    let meta = SuiteMeta {
        format_version: 1,
        config: suite.config.clone(),
        stats: suite.stats,
        fault_rate: suite.stats.fault_rate(),
        status: suite.status,
        cases: n,
        shortfall: suite.shortfall(),
        data_dim,
        latent_dim,
        attempts: suite.cases.iter().map(|c| c.attempt).collect(),
        provenance: provenance.clone(),
    };
    write_json(&dir.join(META), &meta)
}

fn parse_labels(path: &Path, text: &str) -> Result<Vec<CaseRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(LABELS_HEADER) {
        return Err(StoreError::format(path, format!("expected header `{LABELS_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || StoreError::format(path, format!("line {}: malformed row `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let row = CaseRow {
                index: f[0].parse().map_err(|_| bad())?,
                expected: f[1].parse().map_err(|_| bad())?,
                predicted: f[2].parse().map_err(|_| bad())?,
                probability: f[3].parse().map_err(|_| bad())?,
            };
            if row.index != i {
                return Err(bad());
            }
            Ok(row)
        })
        .collect()
}

pub fn read_suite(dir: impl AsRef<Path>) -> Result<SuiteFiles> {
    let dir = dir.as_ref();
    let meta: SuiteMeta = read_json(&dir.join(META))?;
    let inputs = read_tensor(dir.join(INPUTS))?;
    let latents = read_tensor(dir.join(LATENTS))?;
    let labels_path = dir.join(LABELS);
    let text = String::from_utf8(read_bytes(&labels_path)?)
        .map_err(|_| StoreError::format(&labels_path, "not UTF-8"))?;
    let rows = parse_labels(&labels_path, &text)?;
    let n = meta.cases;
    if inputs.shape() != [n, meta.data_dim] || latents.shape() != [n, meta.latent_dim] || rows.len() != n {
        return Err(StoreError::format(dir, format!("suite files disagree on the case count {n}")));
    }
    Ok(SuiteFiles {
        inputs,
        latents,
        rows,
        meta,
    })
}
