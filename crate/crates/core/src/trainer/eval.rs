use crate::data::{corrupt_gaussian, ImageBatch};
use crate::metrics::{compare_batches, MetricsReport};
use crate::ngc::{run_inference, ClampMode, ConvNgcModel};
use crate::tensor::Tensor;

use super::{stream_rng, Purpose, Result};

/// Settings shared by the evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Stimulus window length.
    pub steps: usize,
    /// Seeds the latent initialisation (and the corruption noise).
    pub seed: u64,
    /// Images per inference batch; only affects memory use.
    pub batch_size: usize,
}

impl EvalOptions {
    pub fn for_model(model: &ConvNgcModel<f32>, seed: u64) -> Self {
        EvalOptions {
            steps: model.spec().hyper.steps,
            seed,
            batch_size: 500,
        }
    }
}

/// Runs inference on every image in order and returns `z_bar^0`, shaped
/// like `images.data`. Chunk `b` of `batch_size` images draws its latents
/// from its own seed stream.
pub fn reconstruct(
    model: &ConvNgcModel<f32>,
    images: &ImageBatch,
    mode: ClampMode,
    opts: &EvalOptions,
) -> Result<Tensor<f32>> {
    let mut out = Tensor::zeros(images.data.shape());
    let bs = opts.batch_size.max(1);
    let per = images.image_shape().iter().product::<usize>();
    for (b, start) in (0..images.len()).step_by(bs).enumerate() {
        let chunk = images.range(start, start + bs);
        let mut rng = stream_rng(opts.seed, Purpose::Eval, 0, b as u64);
        let st = run_inference(model, &chunk.data, mode, opts.steps, &mut rng)?;
        out.data_mut()[start * per..start * per + st.output().len()].copy_from_slice(st.output().data());
    }
    Ok(out)
}

/// Clamped reconstruction of `data`, scored against `data`.
pub fn evaluate_reconstruction(
    model: &ConvNgcModel<f32>,
    data: &ImageBatch,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let out = reconstruct(model, data, ClampMode::Clamped, opts)?;
    Ok(compare_batches("recon", &out, data)?)
}

/// Scores of a denoising run.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseReport {
    /// Model output against the clean images.
    pub restored: MetricsReport,
    /// The corrupted input itself against the clean images.
    pub corrupted: MetricsReport,
}

/// Corrupts `data` with `N(0, sigma)` noise, runs inference with the
/// bottom layer clamped only at the first step, and scores the output
/// against the clean images.
pub fn evaluate_denoising(
    model: &ConvNgcModel<f32>,
    data: &ImageBatch,
    sigma: f64,
    opts: &EvalOptions,
) -> Result<DenoiseReport> {
    let noisy = corrupt_gaussian(data, sigma, noise_seed(opts.seed))?;
    let out = reconstruct(model, &noisy, ClampMode::InitOnly, opts)?;
    let tag = format!("denoise(sigma={sigma})");
    Ok(DenoiseReport {
        restored: compare_batches(&tag, &out, data)?,
        corrupted: compare_batches(&format!("{tag}:input"), &noisy.data, data)?,
    })
}

/// Reconstruction of a dataset the model was not trained on, tagged
/// `source->target`.
pub fn evaluate_ood(
    model: &ConvNgcModel<f32>,
    foreign: &ImageBatch,
    source: &str,
    target: &str,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let mut r = evaluate_reconstruction(model, foreign, opts)?;
    r.tag = format!("{source}->{target}");
    Ok(r)
}

/// Seed of the corruption noise used by [`evaluate_denoising`].
pub fn noise_seed(seed: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, Purpose::Noise, 0, 0).next_u64()
}
