use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{ConvGeometry, Real, Tensor};

use super::spec::ModelSpec;
use super::{NgcError, Result};

/// Standard deviation of the zero-mean Gaussian used for kernel init.
pub const WEIGHT_INIT_STD: f64 = 0.1;

/// Learnable parameters of a convolutional generative coding hierarchy.
///
/// `weights[l - 1]` holds the generative kernels of layer `l`, shaped
/// `[C_l, C_{l-1}, kh, kw]`: entry `[i][j]` maps state map `i` of layer `l`
/// onto prediction map `j` of layer `l - 1` by transposed convolution.
/// Error kernels share this layout; `[i][j]` carries error map `j` of layer
/// `l - 1` back to state map `i` by strided correlation. Tied error kernels
/// are not stored: the transpose of the transposed convolution with `W[i][j]`
/// is the strided correlation with the same kernel array.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNgcModel<S: Real = f32> {
    spec: ModelSpec,
    geoms: Vec<ConvGeometry>,
    weights: Vec<Tensor<S>>,
    error_weights: Option<Vec<Tensor<S>>>,
    biases: Vec<Tensor<S>>,
}

impl<S: Real> ConvNgcModel<S> {
    /// All parameters zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let top = spec.top();
        let geoms = (1..=top).map(|l| spec.geometry(l)).collect();
        let weights: Vec<_> = (1..=top).map(|l| Tensor::zeros(&spec.kernel_shape(l))).collect();
        let error_weights = if spec.tied_error { None } else { Some(weights.clone()) };
        let biases = (0..top).map(|l| Tensor::zeros(&spec.map_shape(l))).collect();
        Ok(ConvNgcModel {
            spec,
            geoms,
            weights,
            error_weights,
            biases,
        })
    }

    /// Kernels drawn from `Normal(0, 0.1)`, biases zero. Untied error kernels
    /// start as copies of the generative kernels.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let normal = Normal::new(0.0, WEIGHT_INIT_STD).expect("finite std");
        for w in &mut model.weights {
            for v in w.data_mut() {
                *v = S::from_f64_lossy(normal.sample(rng));
            }
        }
        if let Some(e) = &mut model.error_weights {
            e.clone_from(&model.weights);
        }
        Ok(model)
    }

    /// Assembles a model from explicit parameter tensors.
    pub fn from_parts(
        spec: ModelSpec,
        weights: Vec<Tensor<S>>,
        error_weights: Option<Vec<Tensor<S>>>,
        biases: Vec<Tensor<S>>,
    ) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        if weights.len() != model.weights.len() || biases.len() != model.biases.len() {
            return Err(NgcError::InvalidSpec(
                "parameter list length does not match layer count".into(),
            ));
        }
        if model.spec.tied_error != error_weights.is_none() {
            return Err(NgcError::InvalidSpec(
                "error kernels must be given iff the model is untied".into(),
            ));
        }
        let check = |have: &Tensor<S>, want: &Tensor<S>, what: &str| {
            if have.shape() != want.shape() {
                Err(NgcError::InvalidSpec(format!(
                    "{what}: expected shape {:?}, got {:?}",
                    want.shape(),
                    have.shape()
                )))
            } else {
                Ok(())
            }
        };
        for (w, z) in weights.iter().zip(&model.weights) {
            check(w, z, "kernel")?;
        }
        if let Some(e) = &error_weights {
            if e.len() != weights.len() {
                return Err(NgcError::InvalidSpec("error kernel list length mismatch".into()));
            }
            for (w, z) in e.iter().zip(&model.weights) {
                check(w, z, "error kernel")?;
            }
        }
        for (b, z) in biases.iter().zip(&model.biases) {
            check(b, z, "bias")?;
        }
        model.weights = weights;
        model.error_weights = error_weights;
        model.biases = biases;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Mutable access to the inference constants. Layer shapes are fixed
    /// once parameters exist.
    pub fn hyper_mut(&mut self) -> &mut super::Hyper {
        &mut self.spec.hyper
    }

    pub fn top(&self) -> usize {
        self.spec.top()
    }

    pub fn geometry(&self, l: usize) -> &ConvGeometry {
        &self.geoms[l - 1]
    }

    /// Generative kernels of layer `l >= 1`.
    pub fn weights(&self, l: usize) -> &Tensor<S> {
        &self.weights[l - 1]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut Tensor<S> {
        &mut self.weights[l - 1]
    }

    /// Kernels used to carry errors of layer `l - 1` up to layer `l`.
    pub fn error_weights(&self, l: usize) -> &Tensor<S> {
        match &self.error_weights {
            Some(e) => &e[l - 1],
            None => &self.weights[l - 1],
        }
    }

    pub fn untied_error_weights_mut(&mut self, l: usize) -> Option<&mut Tensor<S>> {
        self.error_weights.as_mut().map(|e| &mut e[l - 1])
    }

    /// Bias maps added to the prediction of layer `l - 1`.
    pub fn bias(&self, l: usize) -> &Tensor<S> {
        &self.biases[l - 1]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut Tensor<S> {
        &mut self.biases[l - 1]
    }

    pub fn count_parameters(&self) -> usize {
        self.spec.count_parameters()
    }

    /// Kernel `[i][j]` of a `[ci, co, kh, kw]` stack.
    pub fn kernel(stack: &Tensor<S>, i: usize, j: usize) -> &[S] {
        let s = stack.shape();
        let kl = s[2] * s[3];
        let off = (i * s[1] + j) * kl;
        &stack.data()[off..off + kl]
    }

    /// Largest Euclidean norm over all individual 2-D kernels.
    pub fn max_kernel_norm(&self) -> f64 {
        let mut m = 0.0f64;
        let stacks = self.weights.iter().chain(self.error_weights.iter().flatten());
        for w in stacks {
            let kl = w.shape()[2] * w.shape()[3];
            for k in w.data().chunks(kl) {
                let n: f64 = k.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>().sqrt();
                m = m.max(n);
            }
        }
        m
    }

    /// Rescales every 2-D kernel whose Euclidean norm exceeds one back onto
    /// the unit sphere.
    pub fn project_kernels(&mut self) {
        let stacks = self.weights.iter_mut().chain(self.error_weights.iter_mut().flatten());
        for w in stacks {
            let kl = w.shape()[2] * w.shape()[3];
            for k in w.data_mut().chunks_mut(kl) {
                let n = k.iter().map(|&v| v * v).sum::<S>().sqrt();
                if n > S::one() {
                    for v in k.iter_mut() {
                        *v = *v / n;
                    }
                }
            }
        }
    }

    /// Parameter tensors in checkpoint/optimizer order: kernels bottom-up,
    /// then untied error kernels, then bias maps when enabled.
    pub fn parameters(&self) -> Vec<&Tensor<S>> {
        let mut out: Vec<&Tensor<S>> = self.weights.iter().collect();
        if let Some(e) = &self.error_weights {
            out.extend(e.iter());
        }
        if self.spec.bias {
            out.extend(self.biases.iter());
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = self.weights.iter_mut().collect();
        if let Some(e) = &mut self.error_weights {
            out.extend(e.iter_mut());
        }
        if self.spec.bias {
            out.extend(self.biases.iter_mut());
        }
        out
    }

    /// Converts the scalar type of every parameter.
    pub fn cast<T: Real>(&self) -> ConvNgcModel<T> {
        ConvNgcModel {
            spec: self.spec.clone(),
            geoms: self.geoms.clone(),
            weights: self.weights.iter().map(Tensor::cast).collect(),
            error_weights: self
                .error_weights
                .as_ref()
                .map(|e| e.iter().map(Tensor::cast).collect()),
            biases: self.biases.iter().map(Tensor::cast).collect(),
        }
    }

    /// Order-sensitive FNV-1a hash over the spec-independent parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in self
            .weights
            .iter()
            .chain(self.error_weights.iter().flatten())
            .chain(&self.biases)
        {
            for v in t.data() {
                for b in v.to_f64().unwrap().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}
