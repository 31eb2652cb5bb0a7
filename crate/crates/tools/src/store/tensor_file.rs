//! The native tensor format.
//!
//! | bytes | content |
//! |---|---|
//! | 0..4 | magic `4D 54 45 4E` (`MTEN`) |
//! | 4 | version, `1` |
//! | 5 | dtype: `1` f32 LE, `2` f64 LE, `3` u8 |
//! | 6 | rank |
//! | 7 | reserved, `0` |
//! | 8.. | `rank` dimensions as u32 LE, then the row-major payload |

use std::path::Path;

use manifold_core::Tensor;

use super::error::{Result, StoreError};
use super::fs::{read_bytes, write_atomic};

pub const MAGIC: [u8; 4] = *b"MTEN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
            DType::U8 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            3 => Some(DType::U8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

/// Serializes `tensor`. `U8` stores values rounded and clamped to 0..=255.
pub fn encode_tensor(tensor: &Tensor, dtype: DType, path: &Path) -> Result<Vec<u8>> {
    let shape = tensor.shape();
    if shape.len() > usize::from(u8::MAX) {
        return Err(StoreError::format(path, format!("rank {} exceeds 255", shape.len())));
    }
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + dtype.size() * tensor.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, dtype.code(), shape.len() as u8, 0]);
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| StoreError::format(path, format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in tensor.data() {
        match dtype {
            DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            DType::U8 => out.push(v.round().clamp(0.0, 255.0) as u8),
        }
    }
    Ok(out)
}

/// Parses a tensor file, widening every dtype to `f64`.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<(Tensor, DType)> {
    let fail = |m: String| StoreError::format(path, m);
    if bytes.len() < 8 {
        return Err(fail(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(fail(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(fail(format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5]).ok_or_else(|| fail(format!("unknown dtype {}", bytes[5])))?;
    let rank = usize::from(bytes[6]);
    if bytes[7] != 0 {
        return Err(fail(format!("reserved byte is {}", bytes[7])));
    }
    let dims_end = 8 + 4 * rank;
    let dims = bytes
        .get(8..dims_end)
        .ok_or_else(|| fail("truncated dimensions".to_string()))?;
    let shape: Vec<usize> = dims
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail("element count overflows".to_string()))?;
    let payload = &bytes[dims_end..];
    if Some(payload.len()) != count.checked_mul(dtype.size()) {
        return Err(fail(format!(
            "payload holds {} bytes, shape {shape:?} needs {}",
            payload.len(),
            count.saturating_mul(dtype.size())
        )));
    }
    let data: Vec<f64> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        DType::U8 => payload.iter().map(|&b| f64::from(b)).collect(),
    };
    Ok((Tensor::new(shape, data)?, dtype))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor, dtype: DType) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &encode_tensor(tensor, dtype, path)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    Ok(decode_tensor(&read_bytes(path)?, path)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn scalar_and_matrix_round_trip() {
        let s = Tensor::scalar(-2.5);
        let bytes = encode_tensor(&s, DType::F64, p()).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(decode_tensor(&bytes, p()).unwrap().0, s);

        let m = Tensor::matrix(2, 3, vec![0.1, -1e300, 3.0, f64::MIN_POSITIVE, 5.5, -0.0]).unwrap();
        let back = decode_tensor(&encode_tensor(&m, DType::F64, p()).unwrap(), p()).unwrap().0;
        assert!(back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.shape(), &[2, 3]);
    }

    #[test]
    fn f32_quantizes() {
        let m = Tensor::vector(vec![0.1, 0.7]);
        let back = decode_tensor(&encode_tensor(&m, DType::F32, p()).unwrap(), p()).unwrap().0;
        assert_eq!(back.data()[0], f64::from(0.1f32));
    }

    #[test]
    fn header_violations_rejected() {
        let good = encode_tensor(&Tensor::vector(vec![1.0, 2.0]), DType::F64, p()).unwrap();
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(decode_tensor(&v2, p()), Err(StoreError::Format { .. })));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(decode_tensor(&magic, p()).is_err());
        let mut dtype = good.clone();
        dtype[5] = 9;
        assert!(decode_tensor(&dtype, p()).is_err());
        assert!(decode_tensor(&good[..good.len() - 1], p()).is_err());
        assert!(decode_tensor(&good[..6], p()).is_err());
    }
}
