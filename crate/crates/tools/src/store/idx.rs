//! Big-endian IDX files (the MNIST/EMNIST distribution format).

use std::fs;
use std::path::Path;

use manifold_core::Tensor;

use super::error::{Result, StoreError};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses an image file: `n × (rows·cols)` pixels scaled from `u8` to `[0, 1]`.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let magic = be_u32(bytes, 0).ok_or_else(|| StoreError::format(path, "truncated header"))?;
    if magic != IMAGE_MAGIC {
        return Err(StoreError::format(
            path,
            format!("bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        ));
    }
    let header = |i: usize| be_u32(bytes, 4 + 4 * i).ok_or_else(|| StoreError::format(path, "truncated header"));
    let (count, rows, cols) = (header(0)? as usize, header(1)? as usize, header(2)? as usize);
    let pixels = rows * cols;
    let payload = &bytes[16..];
    let expected = count
        .checked_mul(pixels)
        .ok_or_else(|| StoreError::format(path, "image dimensions overflow"))?;
    if payload.len() != expected {
        return Err(StoreError::format(
            path,
            format!("payload holds {} bytes, header declares {expected}", payload.len()),
        ));
    }
    let data = payload.iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok(Tensor::new(vec![count, pixels], data)?)
}

/// Parses a label file.
pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0).ok_or_else(|| StoreError::format(path, "truncated header"))?;
    if magic != LABEL_MAGIC {
        return Err(StoreError::format(
            path,
            format!("bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"),
        ));
    }
    let count = be_u32(bytes, 4).ok_or_else(|| StoreError::format(path, "truncated header"))? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(StoreError::format(
            path,
            format!("payload holds {} labels, header declares {count}", payload.len()),
        ));
    }
    Ok(payload.iter().map(|&l| usize::from(l)).collect())
}

pub fn read_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    parse_images(&bytes, path)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    parse_labels(&bytes, path)
}

/// Images and labels; fails if the counts disagree.
pub fn read_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<(Tensor, Vec<usize>)> {
    let x = read_images(&images)?;
    let y = read_labels(&labels)?;
    if x.rows() != y.len() {
        return Err(StoreError::format(
            labels.as_ref(),
            format!("{} labels for {} images", y.len(), x.rows()),
        ));
    }
    Ok((x, y))
}

/// Serializes images back to IDX (pixels are rounded to `u8`).
pub fn encode_images(images: &Tensor, rows: u32, cols: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    out.extend(images.data().iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255, 51, 102]);
        b
    }

    #[test]
    fn image_magic_accepted_and_scaled() {
        let t = parse_images(&tiny(), Path::new("t")).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn label_file_is_not_an_image_file() {
        let labels = encode_labels(&[1, 2, 3]);
        let err = parse_images(&labels, Path::new("l")).unwrap_err();
        assert!(err.to_string().contains("0x00000801"), "{err}");
        assert_eq!(parse_labels(&labels, Path::new("l")).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn truncation_detected() {
        let mut b = tiny();
        b.pop();
        assert!(matches!(parse_images(&b, Path::new("t")), Err(StoreError::Format { .. })));
        assert!(matches!(parse_images(&b[..10], Path::new("t")), Err(StoreError::Format { .. })));
    }
}
