use crate::tensor::{Activation, ConvGeometry};

use super::{NgcError, Result};

/// One layer of state maps. Layer 0 is the bottom (image) layer.
///
/// `stride`, `kernel_*`, `phi` and `g` describe the generative connection
/// from this layer down to the one below; they are carried but unused on
/// layer 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub phi: Activation,
    pub g: Activation,
}

/// Inference and initialisation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// State correction rate.
    pub beta: f64,
    /// State leak.
    pub gamma: f64,
    /// Error-filter time scale; only used with untied error kernels.
    pub lambda: f64,
    /// Stimulus window length.
    pub steps: usize,
    pub mu_z: f64,
    pub sigma_z: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            beta: 0.1,
            gamma: 0.001,
            lambda: 0.9,
            steps: 60,
            mu_z: 0.5,
            sigma_z: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Bottom-up: `layers[0]` is the image layer, `layers[L]` the top.
    pub layers: Vec<LayerSpec>,
    /// Error kernels are the transpose of the generative kernels.
    pub tied_error: bool,
    pub bias: bool,
    pub hyper: Hyper,
}

/// Channel counts of the reference image model, listed top layer first.
pub const DEFAULT_CHANNELS_TOP_DOWN: [usize; 5] = [10, 15, 20, 25, 3];

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::from_top_down(&DEFAULT_CHANNELS_TOP_DOWN, 32, 32, 3, 2).expect("default architecture is valid")
    }
}

impl ModelSpec {
    /// Builds a hierarchy from channel counts listed top layer first, with
    /// the bottom layer of `height x width` and every connection using the
    /// same kernel and stride. States use leaky ReLU, predictions identity.
    pub fn from_top_down(
        channels: &[usize],
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        if channels.len() < 2 {
            return Err(NgcError::InvalidSpec("at least two layers are required".into()));
        }
        let mut layers = Vec::with_capacity(channels.len());
        let (mut h, mut w) = (height, width);
        for (depth, &c) in channels.iter().rev().enumerate() {
            if depth > 0 {
                if h % stride != 0 || w % stride != 0 {
                    return Err(NgcError::InvalidSpec(format!(
                        "layer {depth}: extent {h}x{w} is not divisible by stride {stride}"
                    )));
                }
                h /= stride;
                w /= stride;
            }
            layers.push(LayerSpec {
                channels: c,
                height: h,
                width: w,
                stride,
                kernel_h: kernel,
                kernel_w: kernel,
                phi: Activation::leaky(),
                g: Activation::Identity,
            });
        }
        let spec = ModelSpec {
            layers,
            tied_error: true,
            bias: false,
            hyper: Hyper::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn top(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn with_activations(mut self, phi: Activation, g: Activation) -> Self {
        for l in &mut self.layers {
            l.phi = phi;
            l.g = g;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(NgcError::InvalidSpec("at least two layers are required".into()));
        }
        for (idx, l) in self.layers.iter().enumerate() {
            if l.channels == 0 || l.height == 0 || l.width == 0 {
                return Err(NgcError::InvalidSpec(format!("layer {idx} has an empty extent")));
            }
            if idx == 0 {
                continue;
            }
            if l.stride == 0 || l.kernel_h == 0 || l.kernel_w == 0 {
                return Err(NgcError::InvalidSpec(format!("layer {idx} has zero stride or kernel")));
            }
            let below = &self.layers[idx - 1];
            if below.height != l.height * l.stride || below.width != l.width * l.stride {
                return Err(NgcError::InvalidSpec(format!(
                    "layer {} is {}x{} but layer {idx} ({}x{}, stride {}) predicts {}x{}",
                    idx - 1,
                    below.height,
                    below.width,
                    l.height,
                    l.width,
                    l.stride,
                    l.height * l.stride,
                    l.width * l.stride
                )));
            }
        }
        let h = &self.hyper;
        if h.steps < 1 {
            return Err(NgcError::InvalidSteps(h.steps));
        }
        if h.sigma_z.is_nan() || h.sigma_z < 0.0 || !h.mu_z.is_finite() {
            return Err(NgcError::InvalidSpec(format!(
                "bad top-layer init N({}, {})",
                h.mu_z, h.sigma_z
            )));
        }
        Ok(())
    }

    /// Geometry of the connection from layer `l` (>= 1) down to `l - 1`.
    pub fn geometry(&self, l: usize) -> ConvGeometry {
        let spec = &self.layers[l];
        ConvGeometry::same_transposed(spec.height, spec.width, spec.kernel_h, spec.kernel_w, spec.stride)
            .expect("validated geometry")
    }

    pub fn kernel_shape(&self, l: usize) -> [usize; 4] {
        let spec = &self.layers[l];
        [spec.channels, self.layers[l - 1].channels, spec.kernel_h, spec.kernel_w]
    }

    pub fn map_shape(&self, l: usize) -> [usize; 3] {
        let s = &self.layers[l];
        [s.channels, s.height, s.width]
    }

    pub fn map_len(&self, l: usize) -> usize {
        self.map_shape(l).iter().product()
    }

    /// Independent learnable scalars: kernels, plus error kernels when
    /// untied, plus bias maps when enabled.
    pub fn count_parameters(&self) -> usize {
        let kernels: usize = (1..self.layers.len())
            .map(|l| self.kernel_shape(l).iter().product::<usize>())
            .sum();
        let biases: usize = (0..self.top()).map(|l| self.map_len(l)).sum();
        let mut total = kernels;
        if !self.tied_error {
            total += kernels;
        }
        if self.bias {
            total += biases;
        }
        total
    }
}
