//! Canonical JSON: UTF-8, keys sorted, no insignificant whitespace, floats
//! in shortest round-trip form.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::error::{Result, StoreError};
use super::fs::{read_bytes, write_atomic};

pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    // Round-tripping through `Value` sorts every object's keys.
    let v = serde_json::to_value(value)?;
    serde_json::to_vec(&v)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let bytes = to_canonical(value).map_err(|e| StoreError::format(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::format(path, e.to_string()))
}

/// `x` rounded to `digits` significant digits, printed in shortest form.
pub fn significant(x: f64, digits: usize) -> String {
    let rounded: f64 = format!("{x:.*e}", digits.saturating_sub(1)).parse().unwrap_or(x);
    format!("{rounded}")
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(chunks: &[&[u8]]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for c in chunks {
        h.update(c);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
