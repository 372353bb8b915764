//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes, each plane row-major.

use std::path::Path;

use crate::tensor::Tensor;

use super::{read_file, DataError, ImageBatch, Result, IMAGE_CHANNELS, IMAGE_SIZE};

pub const CIFAR_RECORD_LEN: usize = 1 + IMAGE_CHANNELS * IMAGE_SIZE * IMAGE_SIZE;

/// Decodes the records in `buf`, appending pixels and labels.
pub fn parse_cifar10(buf: &[u8], what: &str, pixels: &mut Vec<f32>, labels: &mut Vec<u8>) -> Result<()> {
    if !buf.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(DataError::RecordLength {
            what: what.to_string(),
            len: buf.len(),
            record: CIFAR_RECORD_LEN,
        });
    }
    for rec in buf.chunks_exact(CIFAR_RECORD_LEN) {
        labels.push(rec[0]);
        pixels.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok(())
}

/// Concatenates the records of every file in `paths`, in order.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<(ImageBatch, Vec<u8>)> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let start = labels.len();
        parse_cifar10(&read_file(p)?, &p.display().to_string(), &mut pixels, &mut labels)?;
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        ids.extend((0..labels.len() - start).map(|i| format!("cifar10:{stem}:{i}")));
    }
    let data = Tensor::from_vec(&[labels.len(), IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE], pixels)?;
    Ok((ImageBatch::new(data, ids)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_tensor_file, save_tensor_file};

    fn record(label: u8, seed: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..3072u32).map(|i| (i as u8).wrapping_mul(seed).wrapping_add(label)));
        r
    }

    #[test]
    fn one_record() {
        let (mut px, mut lb) = (Vec::new(), Vec::new());
        parse_cifar10(&record(7, 3), "x", &mut px, &mut lb).unwrap();
        assert_eq!(lb, vec![7]);
        assert_eq!(px.len(), 3072);
        assert_eq!(px[0], 7.0 / 255.0);
    }

    #[test]
    fn bad_length_is_rejected() {
        let mut buf = record(1, 1);
        buf.push(0);
        let (mut px, mut lb) = (Vec::new(), Vec::new());
        let err = parse_cifar10(&buf, "x", &mut px, &mut lb).unwrap_err();
        assert!(matches!(err, DataError::RecordLength { len: 3074, .. }));
    }

    #[test]
    fn files_concatenate_and_survive_tensor_export() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("data_batch_1.bin");
        let b = dir.path().join("test_batch.bin");
        std::fs::write(&a, [record(7, 3), record(2, 5)].concat()).unwrap();
        std::fs::write(&b, record(9, 11)).unwrap();
        let (batch, labels) = load_cifar10_bin(&[&a, &b]).unwrap();
        assert_eq!(batch.data.shape(), &[3, 3, 32, 32]);
        assert_eq!(labels, vec![7, 2, 9]);
        assert_eq!(batch.ids[2], "cifar10:test_batch:0");
        // green plane of the second record starts at byte 1 + 1024
        let raw = record(2, 5);
        assert_eq!(batch.image(1)[1024], raw[1025] as f32 / 255.0);
        assert!(batch.is_standard());

        let t = dir.path().join("x.ngct");
        save_tensor_file(&t, &batch.data).unwrap();
        assert_eq!(load_tensor_file(&t).unwrap(), batch.data);
    }
}
