//! Local synaptic adjustment: Hebbian-style kernel displacements from
//! post-inference states and errors, an optimizer step, and re-projection
//! of every kernel onto the unit ball.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::tensor::{kernel_grad_multi_acc, ConvScratch, Real, Tensor};

use super::inference::InferenceState;
use super::model::ConvNgcModel;
use super::{NgcError, Result};

/// Descent directions for every learnable tensor, in the same order as
/// [`ConvNgcModel::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Updates<S: Real = f32> {
    /// `dW^l` for `l = 1..=L`, shaped like the kernels.
    pub weights: Vec<Tensor<S>>,
    /// `dE^l = lambda * dW^l` when error kernels are untied.
    pub error_weights: Option<Vec<Tensor<S>>>,
    /// `db^l`, the mean error map, when biases are enabled.
    pub biases: Option<Vec<Tensor<S>>>,
}

impl<S: Real> Updates<S> {
    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out: Vec<&Tensor<S>> = self.weights.iter().collect();
        if let Some(e) = &self.error_weights {
            out.extend(e.iter());
        }
        if let Some(b) = &self.biases {
            out.extend(b.iter());
        }
        out
    }
}

/// Kernel displacement of one sample for layer `l`:
/// `dW_ij = e^{l-1}_j *_1 Dilate(phi(z^l_i), s)`.
fn sample_kernel_update<S: Real>(
    model: &ConvNgcModel<S>,
    l: usize,
    z_up: &[S],
    e_down: &[S],
    out: &mut [S],
    scratch: &mut ConvScratch<S>,
) {
    let spec = &model.spec().layers[l];
    let (ci, co) = (spec.channels, model.spec().layers[l - 1].channels);
    let mut act = z_up.to_vec();
    spec.phi.apply_in_place(&mut act);
    kernel_grad_multi_acc(&act, e_down, ci, co, model.geometry(l), out, scratch);
}

/// Computes the batch-averaged Hebbian displacements from the states and
/// error maps held in `state`.
///
/// With an identity prediction activation, `+dW` is the negative gradient
/// of `1/2 sum ||e||^2` with respect to the kernels at fixed states.
pub fn compute_updates<S: Real>(model: &ConvNgcModel<S>, state: &InferenceState<S>) -> Updates<S> {
    let n = state.batch();
    let inv_n = S::one() / S::from_usize(n.max(1)).unwrap();
    let top = model.top();
    let weights: Vec<Tensor<S>> = (1..=top)
        .map(|l| {
            let shape = model.spec().kernel_shape(l);
            let klen: usize = shape.iter().product();
            let (up_len, down_len) = (model.spec().map_len(l), model.spec().map_len(l - 1));
            // per-sample contributions are reduced in sample order so the
            // result does not depend on the thread count
            let per_sample: Vec<Vec<S>> = (0..n)
                .into_par_iter()
                .map_init(ConvScratch::new, |scratch, s| {
                    let mut k = vec![S::zero(); klen];
                    sample_kernel_update(
                        model,
                        l,
                        &state.z[l].data()[s * up_len..(s + 1) * up_len],
                        &state.e[l - 1].data()[s * down_len..(s + 1) * down_len],
                        &mut k,
                        scratch,
                    );
                    k
                })
                .collect();
            let mut acc = Tensor::zeros(&shape);
            for k in &per_sample {
                for (a, &v) in acc.data_mut().iter_mut().zip(k) {
                    *a += v;
                }
            }
            for a in acc.data_mut() {
                *a *= inv_n;
            }
            acc
        })
        .collect();
    let error_weights = (!model.spec().tied_error).then(|| {
        let lambda = S::from_f64_lossy(model.spec().hyper.lambda);
        weights.iter().map(|w| w.scale(lambda)).collect()
    });
    let biases = model.spec().bias.then(|| {
        (1..=top)
            .map(|l| {
                let len = model.spec().map_len(l - 1);
                let mut acc = Tensor::zeros(&model.spec().map_shape(l - 1));
                for s in 0..n {
                    for (a, &v) in acc
                        .data_mut()
                        .iter_mut()
                        .zip(&state.e[l - 1].data()[s * len..(s + 1) * len])
                    {
                        *a += v;
                    }
                }
                for a in acc.data_mut() {
                    *a *= inv_n;
                }
                acc
            })
            .collect()
    });
    Updates {
        weights,
        error_weights,
        biases,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// `W <- W + alpha * dW / (||dW|| + eps)` per 2-D kernel.
    NormSgd,
    Adam,
}

impl OptimizerKind {
    pub fn id(self) -> u8 {
        match self {
            OptimizerKind::NormSgd => 0,
            OptimizerKind::Adam => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(OptimizerKind::NormSgd),
            1 => Ok(OptimizerKind::Adam),
            other => Err(NgcError::UnknownOptimizer(format!("id {other}"))),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = NgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "norm-sgd" | "sgd" => Ok(OptimizerKind::NormSgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(NgcError::UnknownOptimizer(other.to_string())),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::NormSgd => "norm-sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Optimizer with its per-parameter state.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<S: Real = f32> {
    pub kind: OptimizerKind,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First and second moments, one tensor per parameter (Adam only).
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Real> Optimizer<S> {
    pub fn new(kind: OptimizerKind, alpha: f64) -> Self {
        Optimizer {
            kind,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adam(alpha: f64) -> Self {
        Self::new(OptimizerKind::Adam, alpha)
    }

    pub fn norm_sgd(alpha: f64) -> Self {
        Self::new(OptimizerKind::NormSgd, alpha)
    }

    fn ensure_moments(&mut self, params: &[&Tensor<S>]) {
        let matches = self.m.len() == params.len() && self.m.iter().zip(params).all(|(m, p)| m.shape() == p.shape());
        if !matches {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
    }
}

/// Applies one optimizer step along `updates` and re-projects every kernel
/// whose Euclidean norm exceeds one. Tied error kernels follow implicitly.
pub fn apply_updates<S: Real>(model: &mut ConvNgcModel<S>, updates: &Updates<S>, opt: &mut Optimizer<S>) -> Result<()> {
    let deltas = updates.tensors();
    {
        let params = model.parameters();
        if params.len() != deltas.len() || params.iter().zip(&deltas).any(|(p, d)| p.shape() != d.shape()) {
            return Err(NgcError::InvalidSpec(
                "update tensors do not match model parameters".into(),
            ));
        }
    }
    if opt.kind == OptimizerKind::Adam {
        let params = model.parameters();
        opt.ensure_moments(&params);
    }
    opt.step += 1;
    let alpha = S::from_f64_lossy(opt.alpha);
    let eps = S::from_f64_lossy(opt.eps);
    match opt.kind {
        OptimizerKind::NormSgd => {
            for (p, d) in model.parameters_mut().into_iter().zip(&deltas) {
                // kernels are normalised per 2-D slice, bias maps as a whole
                let chunk = if p.rank() == 4 {
                    p.shape()[2] * p.shape()[3]
                } else {
                    p.len()
                };
                for (pk, dk) in p.data_mut().chunks_mut(chunk).zip(d.data().chunks(chunk)) {
                    let norm = dk.iter().map(|&v| v * v).sum::<S>().sqrt();
                    let scale = alpha / (norm + eps);
                    for (pv, &dv) in pk.iter_mut().zip(dk) {
                        *pv += scale * dv;
                    }
                }
            }
        }
        OptimizerKind::Adam => {
            let (b1, b2) = (opt.beta1, opt.beta2);
            let t = opt.step as i32;
            let c1 = S::from_f64_lossy(1.0 - b1.powi(t));
            let c2 = S::from_f64_lossy(1.0 - b2.powi(t));
            let (b1, b2) = (S::from_f64_lossy(b1), S::from_f64_lossy(b2));
            let params = model.parameters_mut();
            for (((p, d), m), v) in params.into_iter().zip(&deltas).zip(&mut opt.m).zip(&mut opt.v) {
                for (((pv, &dv), mv), vv) in p
                    .data_mut()
                    .iter_mut()
                    .zip(d.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    // updates are descent directions; Adam consumes gradients
                    let g = -dv;
                    *mv = b1 * *mv + (S::one() - b1) * g;
                    *vv = b2 * *vv + (S::one() - b2) * g * g;
                    let m_hat = *mv / c1;
                    let v_hat = *vv / c2;
                    *pv -= alpha * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    model.project_kernels();
    Ok(())
}
