//! Frame-feature files: `"LLNS"`, version `u32 = 1`, `n_frames u32`, `dim u32`,
//! then `n_frames × dim` little-endian `f32` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use super::DataError;
use crate::linalg::Matrix;

pub const FEATURES_MAGIC: &[u8; 4] = b"LLNS";
const VERSION: u32 = 1;

/// Writes features narrowed to `f32`.
pub fn write_features<W: Write>(mut w: W, frames: &Matrix) -> Result<(), DataError> {
    let mut buf = Vec::with_capacity(16 + frames.as_slice().len() * 4);
    buf.extend_from_slice(FEATURES_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(frames.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(frames.cols() as u32).to_le_bytes());
    for v in frames.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<Matrix, DataError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != FEATURES_MAGIC {
        return Err(DataError::Format("missing LLNS header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(DataError::Format(format!("unsupported version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    let expected = 16 + n * d * 4;
    if bytes.len() != expected {
        return Err(DataError::Format(format!(
            "expected {expected} bytes for {n}x{d} frames, found {}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Matrix::new(n, d, data).map_err(|e| DataError::Format(e.to_string()))
}

pub fn write_features_file(path: &Path, frames: &Matrix) -> Result<(), DataError> {
    let f = std::fs::File::create(path)?;
    write_features(std::io::BufWriter::new(f), frames)
}

pub fn read_features_file(path: &Path) -> Result<Matrix, DataError> {
    read_features(std::fs::File::open(path)?)
}
