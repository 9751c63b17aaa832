//! Single-tensor file format: one UTF-8 JSON header line
//! `{"shape": [...], "dtype": "f32"|"f64", "order": "row-major"}`
//! followed by a newline and the raw little-endian payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SalvetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl Dtype {
    fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// In-memory view of a tensor file. Values are held as f64; writing
/// with `Dtype::F32` narrows each value, so an f32 file round-trips
/// bit-exactly while f64 data saved as f32 loses the discarded bits.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    dtype: Dtype,
    order: String,
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d).ok_or_else(|| {
            SalvetError::InvalidArgument(format!("tensor shape {shape:?} overflows"))
        })
    })
}

pub fn write_tensor(path: &Path, shape: &[usize], dtype: Dtype, values: &[f64]) -> Result<()> {
    let n = element_count(shape)?;
    if n != values.len() {
        return Err(SalvetError::InvalidArgument(format!(
            "shape {shape:?} implies {n} values, got {}",
            values.len()
        )));
    }
    let header = Header {
        shape: shape.to_vec(),
        dtype,
        order: "row-major".into(),
    };
    let mut bytes = serde_json::to_vec(&header)
        .map_err(|e| SalvetError::Parse(format!("tensor header encoding failed: {e}")))?;
    bytes.push(b'\n');
    match dtype {
        Dtype::F32 => {
            for v in values {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let tmp = path.with_extension("tsr.tmp");
    fs::write(&tmp, &bytes).map_err(|e| SalvetError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| SalvetError::io(path, e))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<TensorData> {
    let bytes = fs::read(path).map_err(|e| SalvetError::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| SalvetError::Parse(format!("{}: missing header line", path.display())))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| SalvetError::Parse(format!("{}: bad tensor header: {e}", path.display())))?;
    if header.order != "row-major" {
        return Err(SalvetError::Parse(format!(
            "{}: unsupported element order {:?}",
            path.display(),
            header.order
        )));
    }
    let n = element_count(&header.shape)?;
    let payload = &bytes[nl + 1..];
    let expected = n
        .checked_mul(header.dtype.byte_width())
        .ok_or_else(|| SalvetError::Parse(format!("{}: payload size overflows", path.display())))?;
    if payload.len() != expected {
        return Err(SalvetError::Parse(format!(
            "{}: payload is {} bytes, header implies {expected}",
            path.display(),
            payload.len()
        )));
    }
    let values = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(TensorData {
        shape: header.shape,
        dtype: header.dtype,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("salvet-tsr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let path = tmp("a.tsr");
        let values = vec![0.0, -1.5, std::f64::consts::PI, 1e-300, f64::MIN_POSITIVE];
        write_tensor(&path, &[5], Dtype::F64, &values).unwrap();
        let got = read_tensor(&path).unwrap();
        assert_eq!(got.shape, vec![5]);
        assert_eq!(got.dtype, Dtype::F64);
        for (a, b) in got.values.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn f32_file_round_trips_via_rewrite() {
        let path = tmp("b.tsr");
        let values: Vec<f64> = (0..12).map(|i| i as f64 / 7.0).collect();
        write_tensor(&path, &[3, 4], Dtype::F32, &values).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = read_tensor(&path).unwrap();
        write_tensor(&path, &loaded.shape, loaded.dtype, &loaded.values).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let path = tmp("c.tsr");
        std::fs::write(&path, b"not json\n\x00\x00").unwrap();
        assert!(matches!(read_tensor(&path), Err(SalvetError::Parse(_))));

        std::fs::write(&path, b"{\"shape\":[2],\"dtype\":\"f32\",\"order\":\"row-major\"}\n\x00\x00")
            .unwrap();
        assert!(matches!(read_tensor(&path), Err(SalvetError::Parse(_))));

        let err = write_tensor(&path, &[3], Dtype::F32, &[1.0]);
        assert!(matches!(err, Err(SalvetError::InvalidArgument(_))));
    }
}
