use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, ImageBatch, Result};

/// Adds i.i.d. `N(0, sigma)` noise to every pixel. Values are not clipped
/// back into `[0, 1]`. The same `seed` always yields the same noise.
pub fn corrupt_gaussian(batch: &ImageBatch, sigma: f64, seed: u64) -> Result<ImageBatch> {
    if sigma.is_nan() || sigma < 0.0 || sigma.is_infinite() {
        return Err(DataError::InvalidSigma(sigma));
    }
    let mut out = batch.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| DataError::InvalidSigma(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.data.data_mut() {
        *v = (*v as f64 + normal.sample(&mut rng)) as f32;
    }
    Ok(out)
}
