use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::ImageBatch;
use crate::tensor::Tensor;

use super::{mse, psnr, ssim, to_255, MetricsError, Result, PEAK};

const FORMAT: &str = "convngc-metrics-1";

/// Mean and population standard deviation of the finite values in a
/// sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    /// Non-finite values are skipped. An empty sample gives NaN moments.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
            count: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub mse: f64,
    pub ssim: f64,
    /// `+inf` for an exact reconstruction.
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Free-form label, e.g. `recon` or `svhn->cifar10`.
    pub tag: String,
    pub images: Vec<ImageMetrics>,
    pub mse: Stat,
    pub ssim: Stat,
    /// Over images with finite PSNR only.
    pub psnr: Stat,
    /// Images whose PSNR was infinite and left out of `psnr`.
    pub psnr_infinite: usize,
}

impl MetricsReport {
    pub fn from_images(tag: &str, images: Vec<ImageMetrics>) -> MetricsReport {
        MetricsReport {
            tag: tag.to_string(),
            mse: Stat::of(images.iter().map(|m| m.mse)),
            ssim: Stat::of(images.iter().map(|m| m.ssim)),
            psnr: Stat::of(images.iter().map(|m| m.psnr)),
            psnr_infinite: images.iter().filter(|m| m.psnr.is_infinite()).count(),
            images,
        }
    }

    pub fn count(&self) -> usize {
        self.images.len()
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tag    {}", self.tag);
        let _ = writeln!(s, "images {}", self.count());
        let _ = writeln!(s, "mse    {:.4} +/- {:.4}", self.mse.mean, self.mse.std);
        let _ = writeln!(s, "ssim   {:.4} +/- {:.4}", self.ssim.mean, self.ssim.std);
        let _ = write!(s, "psnr   {:.4} +/- {:.4}", self.psnr.mean, self.psnr.std);
        if self.psnr_infinite > 0 {
            let _ = write!(s, " ({} exact reconstructions excluded)", self.psnr_infinite);
        }
        s.push('\n');
        s
    }

    /// `key=value` lines: summary keys followed by `image.<i>.*` entries.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format={FORMAT}");
        let _ = writeln!(s, "tag={}", self.tag);
        let _ = writeln!(s, "count={}", self.count());
        for (name, st) in [("mse", &self.mse), ("ssim", &self.ssim), ("psnr", &self.psnr)] {
            let _ = writeln!(s, "{name}.mean={}", st.mean);
            let _ = writeln!(s, "{name}.std={}", st.std);
            let _ = writeln!(s, "{name}.count={}", st.count);
        }
        let _ = writeln!(s, "psnr.infinite={}", self.psnr_infinite);
        for (i, m) in self.images.iter().enumerate() {
            let _ = writeln!(s, "image.{i}.id={}", m.id);
            let _ = writeln!(s, "image.{i}.mse={}", m.mse);
            let _ = writeln!(s, "image.{i}.ssim={}", m.ssim);
            let _ = writeln!(s, "image.{i}.psnr={}", m.psnr);
        }
        s
    }

    /// Reads the output of [`MetricsReport::to_kv`]. Summary values are
    /// recomputed from the per-image entries.
    pub fn from_kv(text: &str) -> Result<MetricsReport> {
        let err = |line: usize, msg: String| MetricsError::Parse { line, msg };
        let mut tag = None;
        let mut count = None;
        let mut images: Vec<ImageMetrics> = Vec::new();
        for (ln, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if raw.trim().is_empty() {
                continue;
            }
            let (key, value) = raw.split_once('=').ok_or_else(|| err(ln, "missing '='".into()))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(ln, format!("{key}: {e}")));
            match key {
                "format" if value != FORMAT => return Err(err(ln, format!("unknown format {value:?}"))),
                "tag" => tag = Some(value.to_string()),
                "count" => count = Some(value.parse::<usize>().map_err(|e| err(ln, e.to_string()))?),
                k if k.starts_with("image.") => {
                    let mut parts = k["image.".len()..].splitn(2, '.');
                    let idx: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| err(ln, format!("bad key {k}")))?;
                    let field = parts.next().unwrap_or("");
                    if idx > images.len() {
                        return Err(err(ln, format!("image {idx} out of order")));
                    }
                    if idx == images.len() {
                        images.push(ImageMetrics {
                            id: String::new(),
                            mse: f64::NAN,
                            ssim: f64::NAN,
                            psnr: f64::NAN,
                        });
                    }
                    let m = &mut images[idx];
                    match field {
                        "id" => m.id = value.to_string(),
                        "mse" => m.mse = num(value)?,
                        "ssim" => m.ssim = num(value)?,
                        "psnr" => m.psnr = num(value)?,
                        _ => return Err(err(ln, format!("unknown key {k}"))),
                    }
                }
                _ => {}
            }
        }
        let tag = tag.ok_or_else(|| err(0, "missing tag".into()))?;
        if count != Some(images.len()) {
            return Err(err(0, format!("count {count:?} but {} images", images.len())));
        }
        Ok(MetricsReport::from_images(&tag, images))
    }
}

/// Per-image metrics of model-scale `outputs` against `targets`, both
/// rescaled with `clip(x, 0, 1) * 255`.
pub fn compare_batches(tag: &str, outputs: &Tensor<f32>, targets: &ImageBatch) -> Result<MetricsReport> {
    if outputs.shape() != targets.data.shape() {
        return Err(MetricsError::Shape(outputs.len(), targets.data.len()));
    }
    let channels = targets.image_shape()[0];
    let images = (0..targets.len())
        .into_par_iter()
        .map(|i| {
            let x = to_255(targets.image(i));
            let y = to_255(outputs.slab(i));
            Ok(ImageMetrics {
                id: targets.ids[i].clone(),
                mse: mse(&x, &y, channels)?,
                ssim: ssim(&x, &y, channels, PEAK)?,
                psnr: psnr(&x, &y, channels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_images(tag, images))
}

/// Spread of per-trial means across independent trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub mse: Stat,
    pub ssim: Stat,
    pub psnr: Stat,
}

/// Population mean and standard deviation of the trial means.
pub fn aggregate(reports: &[MetricsReport]) -> TrialSummary {
    TrialSummary {
        trials: reports.len(),
        mse: Stat::of(reports.iter().map(|r| r.mse.mean)),
        ssim: Stat::of(reports.iter().map(|r| r.ssim.mean)),
        psnr: Stat::of(reports.iter().map(|r| r.psnr.mean)),
    }
}

impl TrialSummary {
    pub fn to_kv(&self) -> String {
        let mut s = format!("format={FORMAT}\ntrials={}\n", self.trials);
        for (name, st) in [("mse", &self.mse), ("ssim", &self.ssim), ("psnr", &self.psnr)] {
            let _ = writeln!(s, "{name}.mean={}\n{name}.std={}", st.mean, st.std);
        }
        s
    }
}
