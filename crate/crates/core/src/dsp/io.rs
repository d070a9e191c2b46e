//! Binary feature files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 4     | magic `ASCF`                    |
//! | 4     | format version (u32, = 1)       |
//! | 12    | T, F, C (u32 each)              |
//! | 4     | dtype tag (u32, 1 = float32)    |
//! | 4·TFC | row-major float32 data          |

use std::path::Path;

use ndarray::Array3;

use super::FeatureTensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ASCF";
const VERSION: u32 = 1;
const DTYPE_F32: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_feature_file(t: &FeatureTensor) -> Vec<u8> {
    let (tt, f, c) = t.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * tt * f * c);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, tt as u32, f as u32, c as u32, DTYPE_F32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureTensor> {
    let bad = |reason: &str| Error::Format {
        format: "feature",
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(bad("unsupported version"));
    }
    let dims = (word(1) as usize, word(2) as usize, word(3) as usize);
    if word(4) != DTYPE_F32 {
        return Err(bad("unsupported dtype"));
    }
    let n = dims
        .0
        .checked_mul(dims.1)
        .and_then(|v| v.checked_mul(dims.2))
        .ok_or_else(|| bad("dimension overflow"))?;
    if bytes.len() != HEADER_LEN + 4 * n {
        return Err(bad("payload length does not match header"));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let arr = Array3::from_shape_vec(dims, data).map_err(|e| bad(&e.to_string()))?;
    FeatureTensor::new(arr)
}

pub fn write_feature_file(path: &Path, t: &FeatureTensor) -> Result<()> {
    std::fs::write(path, encode_feature_file(t)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes)
}
