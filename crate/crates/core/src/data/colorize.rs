//! Standardising grayscale digits to 32x32 RGB.

use crate::tensor::Tensor;

use super::{DataError, ImageBatch, Result, IMAGE_CHANNELS, IMAGE_SIZE};

/// Bilinear resampling of one `in_h x in_w` map to `out_h x out_w` with
/// half-pixel centres and edge clamping.
pub fn resize_bilinear(src: &[f32], in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    fn taps(o: usize, n_in: usize, n_out: usize) -> (usize, usize, f32) {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = x.floor() as usize;
        (lo, (lo + 1).min(n_in - 1), (x - lo as f64) as f32)
    }
    let cols: Vec<_> = (0..out_w).map(|x| taps(x, in_w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y, in_h, out_h);
        for &(x0, x1, fx) in &cols {
            let top = src[y0 * in_w + x0] * (1.0 - fx) + src[y0 * in_w + x1] * fx;
            let bot = src[y1 * in_w + x0] * (1.0 - fx) + src[y1 * in_w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn standardise(
    gray: &Tensor<f32>,
    mut place: impl FnMut(usize, &[f32], &mut [f32]) -> Result<()>,
) -> Result<Tensor<f32>> {
    let s = gray.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(DataError::Shape(format!("expected grayscale [N, 1, H, W], got {s:?}")));
    }
    let (n, h, w) = (s[0], s[2], s[3]);
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let mut out = Tensor::zeros(&[n, IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE]);
    for i in 0..n {
        let resized = resize_bilinear(gray.slab(i), h, w, IMAGE_SIZE, IMAGE_SIZE);
        let resized: Vec<f32> = resized.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        debug_assert_eq!(resized.len(), plane);
        place(i, &resized, out.slab_mut(i))?;
    }
    Ok(out)
}

/// Color-MNIST: each digit is resized to 32x32 and written into the red
/// channel when its label is even, the green channel when odd. The other
/// channels stay zero.
pub fn colorize_mnist(gray: &Tensor<f32>, labels: &[u8]) -> Result<ImageBatch> {
    if labels.len() != gray.shape().first().copied().unwrap_or(0) {
        return Err(DataError::Shape(format!(
            "{} labels for {} images",
            labels.len(),
            gray.shape().first().copied().unwrap_or(0)
        )));
    }
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let data = standardise(gray, |i, map, dst| {
        let label = labels[i];
        if label > 9 {
            return Err(DataError::Label { index: i, label });
        }
        let ch = if label.is_multiple_of(2) { 0 } else { 1 };
        dst[ch * plane..(ch + 1) * plane].copy_from_slice(map);
        Ok(())
    })?;
    let ids = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("color-mnist:{i}:{l}"))
        .collect();
    ImageBatch::new(data, ids)
}

/// Resizes grayscale images to 32x32 and copies the map into all three
/// channels.
pub fn replicate_gray(gray: &Tensor<f32>, prefix: &str) -> Result<ImageBatch> {
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let data = standardise(gray, |_, map, dst| {
        for c in 0..IMAGE_CHANNELS {
            dst[c * plane..(c + 1) * plane].copy_from_slice(map);
        }
        Ok(())
    })?;
    ImageBatch::with_prefix(data, prefix)
}
