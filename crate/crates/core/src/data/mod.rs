//! Image datasets: IDX (MNIST), CIFAR-10 binary records and the neutral
//! `NGCT` tensor container, plus Gaussian corruption and mini-batching.
//!
//! Every loader produces pixels scaled into `[0, 1]`. Standardised batches
//! are `[N, 3, 32, 32]`, channel-planar.

mod batch;
mod cifar;
mod colorize;
mod idx;
mod noise;
mod source;
mod tensor_file;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub use batch::{batch_iter, BatchIter};
pub use cifar::{load_cifar10_bin, parse_cifar10, CIFAR_RECORD_LEN};
pub use colorize::{colorize_mnist, replicate_gray, resize_bilinear};
pub use idx::{load_idx_images, load_idx_labels, load_idx_mnist, parse_idx_images, parse_idx_labels};
pub use noise::corrupt_gaussian;
pub use source::DataSource;
pub use tensor_file::{load_tensor_file, parse_tensor_file, save_tensor_file, tensor_file_bytes, TENSOR_FILE_MAGIC};

/// Side length of standardised images.
pub const IMAGE_SIZE: usize = 32;
/// Channel count of standardised images.
pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{what}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { what: String, expected: u32, found: u32 },
    #[error("{what}: expected {expected} bytes, found {actual}")]
    Length {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("{what}: length {len} is not a multiple of {record} byte records")]
    RecordLength { what: String, len: usize, record: usize },
    #[error("image {index}: label {label} outside 0..=9")]
    Label { index: usize, label: u8 },
    #[error("{0}")]
    Shape(String),
    #[error("noise standard deviation must be non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("invalid data source {0:?}")]
    Source(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, DataError>;

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A batch of images `[N, C, H, W]` with one provenance string per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub data: Tensor<f32>,
    pub ids: Vec<String>,
}

impl ImageBatch {
    pub fn new(data: Tensor<f32>, ids: Vec<String>) -> Result<Self> {
        if data.rank() != 4 {
            return Err(DataError::Shape(format!(
                "image batch must be rank 4, got shape {:?}",
                data.shape()
            )));
        }
        if ids.len() != data.shape()[0] {
            return Err(DataError::Shape(format!(
                "{} ids for {} images",
                ids.len(),
                data.shape()[0]
            )));
        }
        Ok(ImageBatch { data, ids })
    }

    /// Batch with ids `{prefix}:{index}`.
    pub fn with_prefix(data: Tensor<f32>, prefix: &str) -> Result<Self> {
        let n = data.shape().first().copied().unwrap_or(0);
        Self::new(data, (0..n).map(|i| format!("{prefix}:{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `[C, H, W]`.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[1], s[2], s[3]]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        self.data.slab(i)
    }

    /// Images at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ImageBatch {
        let [c, h, w] = self.image_shape();
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        ImageBatch {
            data: Tensor::from_vec(&[indices.len(), c, h, w], data).expect("selected length matches shape"),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Contiguous images `start..end`, clamped to the batch.
    pub fn range(&self, start: usize, end: usize) -> ImageBatch {
        let end = end.min(self.len());
        let start = start.min(end);
        self.select(&(start..end).collect::<Vec<_>>())
    }

    /// Splits into the first `n` images and the remainder.
    pub fn split_at(&self, n: usize) -> (ImageBatch, ImageBatch) {
        (self.range(0, n), self.range(n, self.len()))
    }

    /// True when the batch is `[N, 3, 32, 32]` with every value in `[0, 1]`.
    pub fn is_standard(&self) -> bool {
        self.image_shape() == [IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE]
            && self.data.data().iter().all(|v| (0.0..=1.0).contains(v))
    }
}
