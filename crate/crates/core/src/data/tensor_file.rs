//! `NGCT` container: magic, `u32` rank, `u32` extents, then row-major
//! `f32` values, all little-endian.

use std::path::Path;

use crate::io_util::write_atomic;
use crate::tensor::Tensor;

use super::{read_file, DataError, Result};

pub const TENSOR_FILE_MAGIC: &[u8; 4] = b"NGCT";

pub fn tensor_file_bytes(t: &Tensor<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    buf.extend_from_slice(TENSOR_FILE_MAGIC);
    buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn parse_tensor_file(buf: &[u8], what: &str) -> Result<Tensor<f32>> {
    let word = |at: usize| -> Result<u32> {
        buf.get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| DataError::Length {
                what: format!("{what} header"),
                expected: at + 4,
                actual: buf.len(),
            })
    };
    let magic = u32::from_be_bytes(*TENSOR_FILE_MAGIC);
    let found = word(0)?.swap_bytes();
    if found != magic {
        return Err(DataError::BadMagic {
            what: what.to_string(),
            expected: magic,
            found,
        });
    }
    let rank = word(4)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for k in 0..rank {
        shape.push(word(8 + 4 * k)? as usize);
    }
    let header = 8 + 4 * rank;
    let count: usize = shape.iter().product();
    let expected = header + 4 * count;
    if buf.len() != expected {
        return Err(DataError::Length {
            what: what.to_string(),
            expected,
            actual: buf.len(),
        });
    }
    let data = buf[header..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Tensor::from_vec(&shape, data)?)
}

pub fn load_tensor_file(path: &Path) -> Result<Tensor<f32>> {
    parse_tensor_file(&read_file(path)?, &path.display().to_string())
}

/// Writes atomically.
pub fn save_tensor_file(path: &Path, t: &Tensor<f32>) -> Result<()> {
    write_atomic(path, &tensor_file_bytes(t)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
