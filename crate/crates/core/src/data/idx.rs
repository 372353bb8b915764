//! IDX files as distributed for MNIST: a big-endian header followed by
//! unsigned bytes.

use std::path::Path;

use crate::tensor::Tensor;

use super::{read_file, DataError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize, what: &str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Length {
            what: format!("{what} header"),
            expected: at + 4,
            actual: buf.len(),
        })
}

fn check_magic(buf: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(buf, 0, what)?;
    if found != expected {
        return Err(DataError::BadMagic {
            what: what.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(buf: &[u8], expected: usize, what: &str) -> Result<()> {
    if buf.len() != expected {
        return Err(DataError::Length {
            what: what.to_string(),
            expected,
            actual: buf.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image file into `[N, 1, rows, cols]` scaled by `1/255`.
pub fn parse_idx_images(buf: &[u8], what: &str) -> Result<Tensor<f32>> {
    check_magic(buf, IMAGES_MAGIC, what)?;
    let n = be_u32(buf, 4, what)? as usize;
    let rows = be_u32(buf, 8, what)? as usize;
    let cols = be_u32(buf, 12, what)? as usize;
    check_len(buf, 16 + n * rows * cols, what)?;
    let data = buf[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Tensor::from_vec(&[n, 1, rows, cols], data)?)
}

/// Parses an IDX label file.
pub fn parse_idx_labels(buf: &[u8], what: &str) -> Result<Vec<u8>> {
    check_magic(buf, LABELS_MAGIC, what)?;
    let n = be_u32(buf, 4, what)? as usize;
    check_len(buf, 8 + n, what)?;
    Ok(buf[8..].to_vec())
}

pub fn load_idx_images(path: &Path) -> Result<Tensor<f32>> {
    parse_idx_images(&read_file(path)?, &path.display().to_string())
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path)?, &path.display().to_string())
}

/// Grayscale images `[N, 1, 28, 28]` in `[0, 1]` and their labels.
pub fn load_idx_mnist(images_path: &Path, labels_path: &Path) -> Result<(Tensor<f32>, Vec<u8>)> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if labels.len() != images.shape()[0] {
        return Err(DataError::Shape(format!(
            "{} images but {} labels",
            images.shape()[0],
            labels.len()
        )));
    }
    Ok((images, labels))
}

#[cfg(test)]
pub(crate) fn idx_images_bytes(n: usize, rows: usize, cols: usize, pixel: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut buf = IMAGES_MAGIC.to_be_bytes().to_vec();
    for d in [n, rows, cols] {
        buf.extend_from_slice(&(d as u32).to_be_bytes());
    }
    buf.extend((0..n * rows * cols).map(pixel));
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_bytes(labels: &[u8]) -> Vec<u8> {
        let mut buf = LABELS_MAGIC.to_be_bytes().to_vec();
        buf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        buf.extend_from_slice(labels);
        buf
    }

    #[test]
    fn header_sets_shape_and_scaling() {
        let buf = idx_images_bytes(3, 28, 28, |i| if i == 5 { 255 } else { (i % 7) as u8 });
        let t = parse_idx_images(&buf, "x").unwrap();
        assert_eq!(t.shape(), &[3, 1, 28, 28]);
        assert_eq!(t.data()[5], 1.0);
        assert_eq!(t.data()[3], 3.0 / 255.0);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn large_header_contract() {
        let buf = idx_images_bytes(10000, 28, 28, |_| 0);
        assert_eq!(parse_idx_images(&buf, "x").unwrap().shape(), &[10000, 1, 28, 28]);
    }

    #[test]
    fn truncated_payload_names_both_sizes() {
        let mut buf = idx_images_bytes(2, 4, 4, |_| 1);
        buf.truncate(buf.len() - 3);
        let err = parse_idx_images(&buf, "imgs").unwrap_err();
        match &err {
            DataError::Length { expected, actual, .. } => assert_eq!((*expected, *actual), (48, 45)),
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("48") && msg.contains("45"), "{msg}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = labels_bytes(&[1, 2]);
        assert!(matches!(
            parse_idx_images(&buf, "x"),
            Err(DataError::BadMagic { found: 0x801, .. })
        ));
        let imgs = idx_images_bytes(1, 1, 1, |_| 0);
        assert!(matches!(parse_idx_labels(&imgs, "x"), Err(DataError::BadMagic { .. })));
        assert!(matches!(parse_idx_labels(&[0, 0], "x"), Err(DataError::Length { .. })));
    }

    #[test]
    fn labels_round_trip() {
        assert_eq!(parse_idx_labels(&labels_bytes(&[7, 0, 9]), "x").unwrap(), vec![7, 0, 9]);
    }

    #[test]
    fn mismatched_counts_fail() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, idx_images_bytes(2, 2, 2, |_| 0)).unwrap();
        std::fs::write(&lp, labels_bytes(&[1])).unwrap();
        assert!(matches!(load_idx_mnist(&ip, &lp), Err(DataError::Shape(_))));
        assert!(matches!(
            load_idx_mnist(&dir.path().join("missing"), &lp),
            Err(DataError::Io { .. })
        ));
    }
}
