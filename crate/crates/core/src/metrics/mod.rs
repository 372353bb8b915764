//! Image quality on the 0-255 scale: per-channel MSE, global SSIM and
//! per-channel PSNR, with per-image and aggregate reports.
//!
//! SSIM here uses whole-image moments per channel (no sliding window), so
//! values differ from the usual windowed SSIM. Variances and the
//! covariance use the `1/N` estimator.

mod report;

use thiserror::Error;

pub use report::{aggregate, compare_batches, ImageMetrics, MetricsReport, Stat, TrialSummary};

/// Dynamic range of 8-bit pixels.
pub const PEAK: f64 = 255.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("images differ in size: {0} vs {1} values")]
    Shape(usize, usize),
    #[error("{len} values do not split into {channels} channels")]
    Channels { len: usize, channels: usize },
    #[error("malformed metrics file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Maps model-scale values to the metric scale: `clip(x, 0, 1) * 255`.
pub fn to_255(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| (v as f64).clamp(0.0, 1.0) * PEAK).collect()
}

fn planes<'a>(x: &'a [f64], y: &'a [f64], channels: usize) -> Result<Vec<(&'a [f64], &'a [f64])>> {
    if x.len() != y.len() {
        return Err(MetricsError::Shape(x.len(), y.len()));
    }
    if channels == 0 || x.is_empty() || !x.len().is_multiple_of(channels) {
        return Err(MetricsError::Channels { len: x.len(), channels });
    }
    let n = x.len() / channels;
    Ok(x.chunks_exact(n).zip(y.chunks_exact(n)).collect())
}

fn plane_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Mean over channels of the per-channel mean squared difference.
pub fn mse(x: &[f64], y: &[f64], channels: usize) -> Result<f64> {
    let p = planes(x, y, channels)?;
    Ok(p.iter().map(|(a, b)| plane_mse(a, b)).sum::<f64>() / p.len() as f64)
}

/// Global SSIM with `C1 = (0.01 Q)^2`, `C2 = (0.03 Q)^2`, computed per
/// channel and averaged.
pub fn ssim(x: &[f64], y: &[f64], channels: usize, q: f64) -> Result<f64> {
    let c1 = (0.01 * q).powi(2);
    let c2 = (0.03 * q).powi(2);
    let p = planes(x, y, channels)?;
    let total: f64 = p
        .iter()
        .map(|(a, b)| {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for (&u, &v) in a.iter().zip(*b) {
                let (du, dv) = (u - ma, v - mb);
                va += du * du;
                vb += dv * dv;
                cov += du * dv;
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// Mean over channels of `20 log10(255 / sqrt(mse_c))`. A channel with
/// zero error makes the result `+inf`.
pub fn psnr(x: &[f64], y: &[f64], channels: usize) -> Result<f64> {
    let p = planes(x, y, channels)?;
    let total: f64 = p
        .iter()
        .map(|(a, b)| {
            let m = plane_mse(a, b);
            if m == 0.0 {
                f64::INFINITY
            } else {
                20.0 * (PEAK / m.sqrt()).log10()
            }
        })
        .sum();
    Ok(total / p.len() as f64)
}
