use std::path::Path;

use manifold_core::Tensor;

use super::Result;
use crate::store::fs::read_bytes;
use crate::store::idx::{parse_images, read_labels};
use crate::store::json::sha256_hex;
use crate::store::suite::read_suite;
use crate::store::tensor_file::{decode_tensor, MAGIC};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Content digest of inputs and labels.
    pub fn id(&self) -> String {
        let bytes: Vec<u8> = self.inputs.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let shape: Vec<u8> = self.inputs.shape().iter().flat_map(|&d| (d as u64).to_le_bytes()).collect();
        let labels: Vec<u8> = self.labels.iter().flatten().flat_map(|&l| (l as u64).to_le_bytes()).collect();
        sha256_hex(&[&shape, &bytes, &labels])[..16].to_string()
    }

    pub fn rows(&self) -> usize {
        self.inputs.shape().first().copied().unwrap_or(0)
    }

    fn truncate(mut self, limit: Option<usize>) -> Self {
        if let Some(n) = limit.filter(|&n| n < self.rows()) {
            self.inputs = self.inputs.slice_rows(0, n);
            if let Some(ls) = &mut self.labels {
                ls.truncate(n);
            }
        }
        self
    }

    /// Rows whose label is `label`.
    pub fn filter_label(&self, label: usize) -> Self {
        let labels = self.labels.as_deref().unwrap_or(&[]);
        let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        Self {
            inputs: self.inputs.select_rows(&keep),
            labels: Some(vec![label; keep.len()]),
        }
    }
}

/// Reads IDX images, a tensor file or a suite directory, with optional IDX
/// labels.
pub fn load(path: &Path, labels: Option<&Path>, limit: Option<usize>) -> Result<Dataset> {
    let mut ds = if path.is_dir() {
        let s = read_suite(path)?;
        let labels = s.labels();
        Dataset {
            inputs: s.inputs,
            labels: Some(labels),
        }
    } else {
        let bytes = read_bytes(path)?;
        let inputs = if bytes.starts_with(&MAGIC) {
            let (t, _) = decode_tensor(&bytes, path)?;
            flatten_rows(t, path)?
        } else {
            parse_images(&bytes, path)?
        };
        Dataset { inputs, labels: None }
    };
    if let Some(lp) = labels {
        let ls = read_labels(lp)?;
        if ls.len() != ds.rows() {
            return Err(crate::store::StoreError::format(
                lp,
                format!("{} labels for {} inputs", ls.len(), ds.rows()),
            )
            .into());
        }
        ds.labels = Some(ls);
    }
    Ok(ds.truncate(limit))
}

/// Views an `n × …` tensor as `n × d`.
fn flatten_rows(t: Tensor, path: &Path) -> Result<Tensor> {
    let shape = t.shape().to_vec();
    match shape.len() {
        0 => Err(crate::store::StoreError::format(path, "expected a batch of inputs, found a scalar").into()),
        1 => Ok(t.reshape(vec![1, shape[0]])?),
        _ => {
            let d = shape[1..].iter().product();
            Ok(t.reshape(vec![shape[0], d])?)
        }
    }
}
