//! Iterative state inference: ancestral initialisation followed by `T`
//! rounds of layer-wise prediction and error-driven state correction.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::tensor::{conv_multi_acc, deconv_multi_acc, ConvScratch, Real, Tensor};

use super::model::ConvNgcModel;
use super::{NgcError, Result};

/// How the bottom layer relates to the presented input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampMode {
    /// `z0 = x` for the whole window.
    Clamped,
    /// `z0 = x` at the first step only; afterwards `z0` evolves like any
    /// other state layer.
    InitOnly,
}

/// Per-batch latent statistics. Every tensor is `[N, C_l, H_l, W_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState<S: Real = f32> {
    /// States for layers `0..=L`.
    pub z: Vec<Tensor<S>>,
    /// Predictions of layers `0..L` (the top layer is never predicted).
    pub z_bar: Vec<Tensor<S>>,
    /// Error maps `z - z_bar` for layers `0..L`.
    pub e: Vec<Tensor<S>>,
    pub clamp: ClampMode,
    /// Total discrepancy measured after each prediction phase.
    pub tod_trace: Vec<f64>,
}

impl<S: Real> InferenceState<S> {
    pub fn batch(&self) -> usize {
        self.z[0].shape()[0]
    }

    pub fn top(&self) -> usize {
        self.z.len() - 1
    }

    /// Reconstruction of the bottom layer, `z_bar^0`.
    pub fn output(&self) -> &Tensor<S> {
        &self.z_bar[0]
    }

    pub fn is_clamped(&self, l: usize) -> bool {
        l == 0 && self.clamp == ClampMode::Clamped
    }

    /// `sum_l 1/2 ||z^l - z_bar^l||^2` over layers `0..L`, all channels,
    /// pixels and samples.
    pub fn total_discrepancy(&self) -> f64 {
        self.z
            .iter()
            .zip(&self.z_bar)
            .map(|(z, zb)| {
                z.data()
                    .iter()
                    .zip(zb.data())
                    .map(|(&a, &b)| {
                        let d = (a - b).to_f64().unwrap();
                        d * d
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            * 0.5
    }
}

fn batched<S: Real>(model: &ConvNgcModel<S>, l: usize, n: usize) -> Tensor<S> {
    let [c, h, w] = model.spec().map_shape(l);
    Tensor::zeros(&[n, c, h, w])
}

/// Prediction of layer `l - 1` from the states of layer `l` for one sample.
fn predict_sample<S: Real>(
    model: &ConvNgcModel<S>,
    l: usize,
    z_up: &[S],
    z_bar: &mut [S],
    scratch: &mut ConvScratch<S>,
) {
    let spec = &model.spec().layers[l];
    let (ci, co) = (spec.channels, model.spec().layers[l - 1].channels);
    let mut act = z_up.to_vec();
    spec.phi.apply_in_place(&mut act);
    z_bar.fill(S::zero());
    deconv_multi_acc(&act, model.weights(l).data(), ci, co, model.geometry(l), z_bar, scratch);
    if model.spec().bias {
        for (p, &b) in z_bar.iter_mut().zip(model.bias(l).data()) {
            *p += b;
        }
    }
    spec.g.apply_in_place(z_bar);
}

/// Correction direction `d^l` for one sample:
/// `-e^l + sum_j E_ji *_s e^{l-1}_j`, the first term absent at the top and
/// the second absent at the bottom.
fn direction_sample<S: Real>(
    model: &ConvNgcModel<S>,
    l: usize,
    e_here: Option<&[S]>,
    e_below: Option<&[S]>,
    d: &mut [S],
    scratch: &mut ConvScratch<S>,
) {
    match e_here {
        Some(e) => {
            for (dv, &ev) in d.iter_mut().zip(e) {
                *dv = -ev;
            }
        }
        None => d.fill(S::zero()),
    }
    if let Some(eb) = e_below {
        let (ci, co) = (model.spec().layers[l].channels, model.spec().layers[l - 1].channels);
        conv_multi_acc(eb, model.error_weights(l).data(), ci, co, model.geometry(l), d, scratch);
    }
}

/// Samples the top layer from `Normal(mu_z, sigma_z)` element-wise and
/// projects it down once, setting `z^l = z_bar^l` for every lower layer.
/// Error maps start at zero. The returned state is unclamped.
pub fn ancestral_init<S: Real, R: Rng + ?Sized>(
    model: &ConvNgcModel<S>,
    batch: usize,
    rng: &mut R,
) -> Result<InferenceState<S>> {
    let hyper = model.spec().hyper;
    let normal =
        Normal::new(hyper.mu_z, hyper.sigma_z).map_err(|e| NgcError::InvalidSpec(format!("top-layer init: {e}")))?;
    let top = model.top();
    let mut z: Vec<Tensor<S>> = (0..=top).map(|l| batched(model, l, batch)).collect();
    for v in z[top].data_mut() {
        *v = S::from_f64_lossy(normal.sample(rng));
    }
    for l in (1..=top).rev() {
        let (lower, upper) = z.split_at_mut(l);
        let (up_len, down_len) = (model.spec().map_len(l), model.spec().map_len(l - 1));
        lower[l - 1]
            .data_mut()
            .par_chunks_mut(down_len)
            .zip(upper[0].data().par_chunks(up_len))
            .for_each_init(ConvScratch::new, |scratch, (down, up)| {
                predict_sample(model, l, up, down, scratch)
            });
    }
    let z_bar = z[..top].to_vec();
    let e = (0..top).map(|l| batched(model, l, batch)).collect();
    Ok(InferenceState {
        z,
        z_bar,
        e,
        clamp: ClampMode::InitOnly,
        tod_trace: Vec::new(),
    })
}

/// Recomputes `z_bar^{l-1}` and `e^{l-1}` from the current states.
pub fn predict_layer<S: Real>(model: &ConvNgcModel<S>, state: &mut InferenceState<S>, l: usize) {
    assert!(l >= 1 && l <= model.top(), "layer {l} does not predict anything");
    let (up_len, down_len) = (model.spec().map_len(l), model.spec().map_len(l - 1));
    let z_up = &state.z[l];
    let z_down = &state.z[l - 1];
    state.z_bar[l - 1]
        .data_mut()
        .par_chunks_mut(down_len)
        .zip(state.e[l - 1].data_mut().par_chunks_mut(down_len))
        .zip(z_up.data().par_chunks(up_len).zip(z_down.data().par_chunks(down_len)))
        .for_each_init(ConvScratch::new, |scratch, ((zb, e), (up, down))| {
            predict_sample(model, l, up, zb, scratch);
            for ((ev, &zv), &pv) in e.iter_mut().zip(down).zip(zb.iter()) {
                *ev = zv - pv;
            }
        });
}

/// Runs [`predict_layer`] for every layer, top-down.
pub fn predict_all<S: Real>(model: &ConvNgcModel<S>, state: &mut InferenceState<S>) {
    for l in (1..=model.top()).rev() {
        predict_layer(model, state, l);
    }
}

/// Correction directions `d^l` for every layer `0..=L` from the current
/// error maps.
pub fn correction_directions<S: Real>(model: &ConvNgcModel<S>, state: &InferenceState<S>) -> Vec<Tensor<S>> {
    let top = model.top();
    (0..=top)
        .map(|l| {
            let mut d = batched(model, l, state.batch());
            let here_len = model.spec().map_len(l);
            let below_len = if l > 0 { model.spec().map_len(l - 1) } else { 0 };
            d.data_mut()
                .par_chunks_mut(here_len)
                .enumerate()
                .for_each_init(ConvScratch::new, |scratch, (n, dn)| {
                    let e_here = (l < top).then(|| state.e[l].slab(n));
                    let e_below = (l > 0).then(|| &state.e[l - 1].data()[n * below_len..(n + 1) * below_len]);
                    direction_sample(model, l, e_here, e_below, dn, scratch);
                });
            d
        })
        .collect()
}

/// `z^l <- z^l + beta * d^l - gamma * z^l` for every unclamped layer.
pub fn correct_states<S: Real>(model: &ConvNgcModel<S>, state: &mut InferenceState<S>) {
    let top = model.top();
    let beta = S::from_f64_lossy(model.spec().hyper.beta);
    let gamma = S::from_f64_lossy(model.spec().hyper.gamma);
    for l in (0..=top).rev() {
        if state.is_clamped(l) {
            continue;
        }
        let here_len = model.spec().map_len(l);
        let below_len = if l > 0 { model.spec().map_len(l - 1) } else { 0 };
        let e = &state.e;
        state.z[l]
            .data_mut()
            .par_chunks_mut(here_len)
            .enumerate()
            .for_each_init(ConvScratch::new, |scratch, (n, zn)| {
                let e_here = (l < top).then(|| &e[l].data()[n * here_len..(n + 1) * here_len]);
                let e_below = (l > 0).then(|| &e[l - 1].data()[n * below_len..(n + 1) * below_len]);
                let mut d = vec![S::zero(); here_len];
                direction_sample(model, l, e_here, e_below, &mut d, scratch);
                for (zv, &dv) in zn.iter_mut().zip(&d) {
                    *zv = *zv + beta * dv - gamma * *zv;
                }
            });
    }
}

/// One step of the stimulus window: predict every layer, record the total
/// discrepancy, then correct every unclamped layer.
pub fn step<S: Real>(model: &ConvNgcModel<S>, state: &mut InferenceState<S>) {
    predict_all(model, state);
    state.tod_trace.push(state.total_discrepancy());
    correct_states(model, state);
}

/// Ancestral initialisation, bottom layer set to `input`, then `steps`
/// prediction/correction rounds. The reconstruction is
/// [`InferenceState::output`].
pub fn run_inference<S: Real, R: Rng + ?Sized>(
    model: &ConvNgcModel<S>,
    input: &Tensor<S>,
    mode: ClampMode,
    steps: usize,
    rng: &mut R,
) -> Result<InferenceState<S>> {
    if steps < 1 {
        return Err(NgcError::InvalidSteps(steps));
    }
    let [c, h, w] = model.spec().map_shape(0);
    let n = input.shape().first().copied().unwrap_or(0);
    if input.shape() != [n, c, h, w] {
        return Err(NgcError::InputShape {
            expected: vec![n, c, h, w],
            actual: input.shape().to_vec(),
        });
    }
    let mut state = ancestral_init(model, n, rng)?;
    state.z[0].data_mut().copy_from_slice(input.data());
    state.clamp = mode;
    for _ in 0..steps {
        step(model, &mut state);
    }
    Ok(state)
}
