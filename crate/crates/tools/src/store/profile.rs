use std::path::Path;

use manifold_core::adequacy::ActivationProfile;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::{Result, StoreError};
use super::json::{read_json, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileDocument {
    format_version: u32,
    widths: Vec<usize>,
    low: Vec<f64>,
    high: Vec<f64>,
    #[serde(default)]
    provenance: Value,
}

pub fn write_profile(path: impl AsRef<Path>, profile: &ActivationProfile, provenance: &Value) -> Result<()> {
    let doc = ProfileDocument {
        format_version: 1,
        widths: profile.widths().to_vec(),
        low: profile.low().to_vec(),
        high: profile.high().to_vec(),
        provenance: provenance.clone(),
    };
    write_json(path.as_ref(), &doc)
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<(ActivationProfile, Value)> {
    let path = path.as_ref();
    let doc: ProfileDocument = read_json(path)?;
    if doc.format_version != 1 {
        return Err(StoreError::format(path, format!("unsupported format version {}", doc.format_version)));
    }
    let profile =
        ActivationProfile::new(doc.widths, doc.low, doc.high).map_err(|e| StoreError::format(path, e.to_string()))?;
    Ok((profile, doc.provenance))
}
