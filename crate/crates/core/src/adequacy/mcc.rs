use alloc::vec::Vec;

use super::grid::{checked_pow, SectionGrid};
use super::report::{CoverageParams, CoverageReport, Criterion};
use crate::error::{Error, Result};
use crate::manifold::VaeModel;
use crate::numerics::Tensor;

const ENCODE_BATCH: usize = 512;

pub(crate) fn check_labels(testset: &Tensor, labels: Option<&[usize]>) -> Result<()> {
    match labels {
        Some(ls) if ls.len() != testset.rows() => Err(Error::Input(alloc::format!(
            "{} labels for {} inputs",
            ls.len(),
            testset.rows()
        ))),
        _ => Ok(()),
    }
}

/// Calls `visit(row, μ)` with the posterior mean of every input.
///
/// A conditional encoder is fed the suite's labels; an unconditional one
/// ignores them.
pub(crate) fn for_each_mean(
    testset: &Tensor,
    labels: Option<&[usize]>,
    encoder: &VaeModel,
    grid: &SectionGrid,
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    if encoder.latent_dim() != grid.latent_dim() {
        return Err(Error::Configuration(alloc::format!(
            "encoder latent width {} does not match grid width {}",
            encoder.latent_dim(),
            grid.latent_dim()
        )));
    }
    check_labels(testset, labels)?;
    if encoder.is_conditional() && labels.is_none() {
        return Err(Error::Conditioning("conditional encoder requires labels".into()));
    }
    let rows = testset.rows();
    let mut start = 0;
    while start < rows {
        let end = (start + ENCODE_BATCH).min(rows);
        let x = testset.slice_rows(start, end);
        let cond = if encoder.is_conditional() { labels.map(|ls| &ls[start..end]) } else { None };
        let post = encoder.encode(&x, cond)?;
        for (i, mu) in post.mean.data().chunks_exact(grid.latent_dim()).enumerate() {
            visit(start + i, mu)?;
        }
        start = end;
    }
    Ok(())
}

/// k-section combination coverage of posterior means over `k^κ` cells.
pub fn mcc_measure(
    testset: &Tensor,
    labels: Option<&[usize]>,
    encoder: &VaeModel,
    grid: &SectionGrid,
) -> Result<CoverageReport> {
    let params = CoverageParams {
        sections: Some(grid.sections()),
        latent_dim: Some(grid.latent_dim()),
        ..CoverageParams::default()
    };
    let mut report = CoverageReport::new(Criterion::Mcc, params, grid.obligation_count()?);
    let k = grid.sections();
    for_each_mean(testset, labels, encoder, grid, |row, mu| {
        let key = grid.section_of(mu)?;
        report.record(key.index(k), labels.map(|ls| ls[row]));
        Ok(())
    })?;
    Ok(report)
}

/// Lexicographic rank of each `t`-subset of `0..κ`, in enumeration order.
pub(crate) fn subsets(latent_dim: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..t).collect();
    if t == 0 || t > latent_dim {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = t;
        while i > 0 && cur[i - 1] == latent_dim - t + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..t {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// t-way coverage: obligations are (dimension subset, section tuple) pairs,
/// indexed `rank · k^t + Σ s_j · k^j`.
pub fn tway_measure(
    testset: &Tensor,
    labels: Option<&[usize]>,
    encoder: &VaeModel,
    grid: &SectionGrid,
    t: usize,
) -> Result<CoverageReport> {
    let kappa = grid.latent_dim();
    if t == 0 || t > kappa {
        return Err(Error::Parameter(alloc::format!("t = {t} outside 1..={kappa}")));
    }
    let combos = subsets(kappa, t);
    let per_combo = checked_pow(grid.sections(), t)?;
    let total = per_combo
        .checked_mul(combos.len() as u64)
        .ok_or_else(|| Error::Parameter("t-way obligation count overflows u64".into()))?;
    let params = CoverageParams {
        sections: Some(grid.sections()),
        latent_dim: Some(kappa),
        t: Some(t),
        ..CoverageParams::default()
    };
    let mut report = CoverageReport::new(Criterion::Tway, params, total);
    let k = grid.sections() as u64;
    for_each_mean(testset, labels, encoder, grid, |row, mu| {
        let key = grid.section_of(mu)?;
        let s = key.sections();
        for (rank, dims) in combos.iter().enumerate() {
            let local = dims.iter().rev().fold(0u64, |acc, &d| acc * k + u64::from(s[d]));
            report.record(rank as u64 * per_combo + local, labels.map(|ls| ls[row]));
        }
        Ok(())
    })?;
    Ok(report)
}
