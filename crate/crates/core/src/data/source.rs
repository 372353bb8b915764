use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{
    colorize_mnist, load_cifar10_bin, load_idx_mnist, load_tensor_file, replicate_gray, DataError, ImageBatch, Result,
};

/// Where a dataset comes from, written as `kind:location`.
///
/// * `mnist:<prefix>` reads `<prefix>-images-idx3-ubyte` and
///   `<prefix>-labels-idx1-ubyte` and colorizes them; `mnist:<images>,<labels>`
///   names both files explicitly. `mnist-gray:` replicates the digit into
///   all channels instead.
/// * `cifar:<file>[,<file>...]` reads CIFAR-10 binary batches.
/// * `ngct:<file>` or a bare path reads an `NGCT` tensor `[N, C, H, W]`.
///   Bare paths ending in `.bin` are read as CIFAR-10.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        color: bool,
    },
    Cifar(Vec<PathBuf>),
    Tensor(PathBuf),
}

fn idx_pair(loc: &str) -> (PathBuf, PathBuf) {
    match loc.split_once(',') {
        Some((i, l)) => (PathBuf::from(i), PathBuf::from(l)),
        None => (
            PathBuf::from(format!("{loc}-images-idx3-ubyte")),
            PathBuf::from(format!("{loc}-labels-idx1-ubyte")),
        ),
    }
}

impl FromStr for DataSource {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DataError::Source(s.to_string()));
        }
        let (kind, loc) = match s.split_once(':') {
            Some((k, l)) if ["mnist", "mnist-gray", "cifar", "ngct"].contains(&k) => (k, l),
            _ if s.ends_with(".bin") => ("cifar", s),
            _ => ("ngct", s),
        };
        if loc.is_empty() {
            return Err(DataError::Source(s.to_string()));
        }
        Ok(match kind {
            "mnist" | "mnist-gray" => {
                let (images, labels) = idx_pair(loc);
                DataSource::Mnist {
                    images,
                    labels,
                    color: kind == "mnist",
                }
            }
            "cifar" => DataSource::Cifar(loc.split(',').map(PathBuf::from).collect()),
            _ => DataSource::Tensor(PathBuf::from(loc)),
        })
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ps: &[&Path]| ps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
        match self {
            DataSource::Mnist { images, labels, color } => {
                let kind = if *color { "mnist" } else { "mnist-gray" };
                write!(f, "{kind}:{}", join(&[images, labels]))
            }
            DataSource::Cifar(ps) => {
                write!(
                    f,
                    "cifar:{}",
                    join(&ps.iter().map(PathBuf::as_path).collect::<Vec<_>>())
                )
            }
            DataSource::Tensor(p) => write!(f, "ngct:{}", p.display()),
        }
    }
}

impl DataSource {
    /// Loads the images, scaled into `[0, 1]`. Labels are discarded.
    pub fn load(&self) -> Result<ImageBatch> {
        match self {
            DataSource::Mnist { images, labels, color } => {
                let (gray, labels) = load_idx_mnist(images, labels)?;
                if *color {
                    colorize_mnist(&gray, &labels)
                } else {
                    replicate_gray(&gray, "mnist-gray")
                }
            }
            DataSource::Cifar(paths) => Ok(load_cifar10_bin(paths)?.0),
            DataSource::Tensor(path) => {
                let t = load_tensor_file(path)?;
                if t.rank() != 4 {
                    return Err(DataError::Shape(format!(
                        "{}: expected [N, C, H, W], got {:?}",
                        path.display(),
                        t.shape()
                    )));
                }
                if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(DataError::Shape(format!(
                        "{}: pixel value {v} outside [0, 1]",
                        path.display()
                    )));
                }
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                ImageBatch::with_prefix(t, &stem)
            }
        }
    }
}
