use alloc::vec;
use alloc::vec::Vec;

use super::mcc::check_labels;
use super::report::{CoverageParams, CoverageReport, Criterion};
use crate::error::{Error, Result};
use crate::numerics::{Network, Tape, Tensor};

const FORWARD_BATCH: usize = 512;

/// Default neuron-coverage threshold on min-max scaled activations.
pub const DEFAULT_NC_THRESHOLD: f64 = 0.5;

/// Per-neuron activation bounds seen over a profiling set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActivationProfile {
    widths: Vec<usize>,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActivationProfile {
    pub fn new(widths: Vec<usize>, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let n: usize = widths.iter().sum();
        if low.len() != n || high.len() != n {
            return Err(Error::Input(alloc::format!(
                "profile for {n} neurons has {} low and {} high bounds",
                low.len(),
                high.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| !(low[i] <= high[i]) || !low[i].is_finite() || !high[i].is_finite()) {
            return Err(Error::Input(alloc::format!("neuron {i} has bounds {} > {}", low[i], high[i])));
        }
        Ok(Self { widths, low, high })
    }

    /// Hidden layer widths of the profiled network.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn neuron_count(&self) -> usize {
        self.low.len()
    }
}

/// Widths of the non-output layers.
pub fn hidden_widths(model: &Network) -> Vec<usize> {
    let w = model.widths();
    w[..w.len() - 1].to_vec()
}

/// Calls `visit(row, a)` with each input's concatenated hidden
/// post-activations.
fn for_each_hidden(
    model: &Network,
    data: &Tensor,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<usize> {
    let hidden = model.layers().len() - 1;
    let n: usize = hidden_widths(model).iter().sum();
    if n == 0 {
        return Err(Error::Configuration("model has no hidden neurons".into()));
    }
    let mut tape = Tape::new();
    let mut buf = vec![0.0; n];
    let rows = data.rows();
    let mut start = 0;
    while start < rows {
        let end = (start + FORWARD_BATCH).min(rows);
        model.forward_recorded(&data.slice_rows(start, end), &mut tape)?;
        for r in 0..end - start {
            let mut off = 0;
            for l in 0..hidden {
                let width = model.layers()[l].out_dim();
                buf[off..off + width].copy_from_slice(&tape.activation(l)[r * width..(r + 1) * width]);
                off += width;
            }
            visit(start + r, &buf);
        }
        start = end;
    }
    Ok(n)
}

/// Neuron coverage: a hidden neuron is covered when its activation, min-max
/// scaled over the suite, exceeds `threshold` for some input.
pub fn nc_measure(
    model: &Network,
    testset: &Tensor,
    labels: Option<&[usize]>,
    threshold: f64,
) -> Result<CoverageReport> {
    if !threshold.is_finite() {
        return Err(Error::Parameter("threshold must be finite".into()));
    }
    if testset.rows() == 0 {
        return Err(Error::Input("neuron coverage needs a nonempty suite".into()));
    }
    check_labels(testset, labels)?;
    let n: usize = hidden_widths(model).iter().sum();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for_each_hidden(model, testset, |_, a| {
        for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(a) {
            *l = l.min(v);
            *h = h.max(v);
        }
    })?;
    let params = CoverageParams {
        nc_threshold: Some(threshold),
        ..CoverageParams::default()
    };
    let mut report = CoverageReport::new(Criterion::Nc, params, n as u64);
    for_each_hidden(model, testset, |row, a| {
        for (i, &v) in a.iter().enumerate() {
            let span = hi[i] - lo[i];
            let scaled = if span > 0.0 { (v - lo[i]) / span } else { 0.0 };
            if scaled > threshold {
                report.record(i as u64, labels.map(|ls| ls[row]));
            }
        }
    })?;
    Ok(report)
}

/// Elementwise min and max of hidden activations over `dataset`.
pub fn profile_activations(model: &Network, dataset: &Tensor) -> Result<ActivationProfile> {
    if dataset.rows() == 0 {
        return Err(Error::Input("cannot profile an empty dataset".into()));
    }
    let n: usize = hidden_widths(model).iter().sum();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for_each_hidden(model, dataset, |_, a| {
        for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(a) {
            *l = l.min(v);
            *h = h.max(v);
        }
    })?;
    ActivationProfile::new(hidden_widths(model), lo, hi)
}

/// Neuron boundary coverage. Neuron `i` owns obligations `2i` (activation
/// above the profiled high) and `2i + 1` (below the profiled low).
pub fn nbc_measure(
    model: &Network,
    testset: &Tensor,
    labels: Option<&[usize]>,
    profile: &ActivationProfile,
) -> Result<CoverageReport> {
    if hidden_widths(model) != profile.widths() {
        return Err(Error::Configuration(alloc::format!(
            "profile widths {:?} do not match model hidden widths {:?}",
            profile.widths(),
            hidden_widths(model)
        )));
    }
    check_labels(testset, labels)?;
    let n = profile.neuron_count();
    let mut report = CoverageReport::new(Criterion::Nbc, CoverageParams::default(), 2 * n as u64);
    if testset.rows() == 0 {
        return Ok(report);
    }
    for_each_hidden(model, testset, |row, a| {
        for (i, &v) in a.iter().enumerate() {
            let label = labels.map(|ls| ls[row]);
            if v > profile.high[i] {
                report.record(2 * i as u64, label);
            } else if v < profile.low[i] {
                report.record(2 * i as u64 + 1, label);
            }
        }
    })?;
    Ok(report)
}
