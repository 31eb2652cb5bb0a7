//! Fréchet distance between Gaussians fitted to feature sets.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{dim, ensure_finite, Error, Result};
use crate::numerics::{linalg, Network, Tape, Tensor};

/// Ridge added to both covariances before taking square roots.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

const EIGEN_TOLERANCE: f64 = 1e-14;
const EIGEN_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: Vec<f64>,
    /// Row-major `d × d`.
    covariance: Vec<f64>,
    count: usize,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        dim("covariance size", d * d, covariance.len())?;
        if count < 2 {
            return Err(Error::Input(alloc::format!("a Gaussian fit needs 2 samples, got {count}")));
        }
        ensure_finite(&mean, "mean")?;
        ensure_finite(&covariance, "covariance")?;
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (covariance[i * d + j], covariance[j * d + i]);
                if (a - b).abs() > 1e-9 {
                    return Err(Error::Input(alloc::format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { mean, covariance, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Sample mean and unbiased covariance of the rows of `features`.
pub fn fit_gaussian(features: &Tensor) -> Result<GaussianSummary> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(Error::Input(alloc::format!("a Gaussian fit needs 2 samples, got {n}")));
    }
    features.ensure_finite("features")?;
    let mut mean = vec![0.0; d];
    for row in features.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = features.data().to_vec();
    for row in centered.chunks_exact_mut(d) {
        row.iter_mut().zip(&mean).for_each(|(v, &m)| *v -= m);
    }
    let mut cov = vec![0.0; d * d];
    linalg::matmul_at(d, n, d, &centered, &centered, 0.0, &mut cov);
    let scale = 1.0 / (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let s = 0.5 * (cov[i * d + j] + cov[j * d + i]) * scale;
            cov[i * d + j] = s;
            cov[j * d + i] = s;
        }
    }
    GaussianSummary::new(mean, cov, n)
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, EIGEN_TOLERANCE, EIGEN_MAX_ITERATIONS)
        .ok_or_else(|| Error::NumericFailure("symmetric eigensolver did not converge".into()))
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa^½ Σb Σa^½)^½)`, never negative.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Configuration(alloc::format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim();
    let ridge = |c: &[f64]| {
        let mut m = DMatrix::from_row_slice(d, d, c);
        for i in 0..d {
            m[(i, i)] += COVARIANCE_RIDGE;
        }
        m
    };
    let (sa, sb) = (ridge(&a.covariance), ridge(&b.covariance));
    let ea = eigen(sa.clone())?;
    let roots = ea.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    let root_a = &ea.eigenvectors * DMatrix::from_diagonal(&roots) * ea.eigenvectors.transpose();
    let mut sandwich = &root_a * &sb * &root_a;
    sandwich = (&sandwich + sandwich.transpose()) * 0.5;
    let es = eigen(sandwich)?;
    let cross: f64 = es.eigenvalues.iter().map(|&l| libm::sqrt(l.max(0.0))).sum();
    let mean_term = linalg::squared_distance(&a.mean, &b.mean);
    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::NumericFailure("Fréchet distance is not finite".into()));
    }
    Ok(value.max(0.0))
}

/// Where features come from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureExtractor<'a> {
    RawPixels,
    /// Outputs of the last hidden layer of a classifier.
    Penultimate(&'a Network),
}

impl FeatureExtractor<'_> {
    /// Feature width for inputs of `input_dim` values.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match self {
            FeatureExtractor::RawPixels => Ok(input_dim),
            FeatureExtractor::Penultimate(net) => {
                let w = net.widths();
                if w.len() < 2 {
                    return Err(Error::Configuration("classifier has no hidden layer".into()));
                }
                Ok(w[w.len() - 2])
            }
        }
    }
}

pub fn extract_features(extractor: FeatureExtractor<'_>, data: &Tensor) -> Result<Tensor> {
    let (rows, cols) = data.batch_dims();
    match extractor {
        FeatureExtractor::RawPixels => Tensor::matrix(rows, cols, data.data().to_vec()),
        FeatureExtractor::Penultimate(net) => {
            let d = extractor.output_dim(cols)?;
            dim("classifier input", net.input_dim(), cols)?;
            let layer = net.layers().len() - 2;
            let mut out = Vec::with_capacity(rows * d);
            let mut tape = Tape::new();
            let mut start = 0;
            while start < rows {
                let end = (start + 512).min(rows);
                net.forward_recorded(&data.slice_rows(start, end), &mut tape)?;
                out.extend_from_slice(tape.activation(layer));
                start = end;
            }
            Tensor::matrix(rows, d, out)
        }
    }
}
