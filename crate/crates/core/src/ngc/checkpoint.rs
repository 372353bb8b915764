//! `NGC1` checkpoint files.
//!
//! All integers and floats are little-endian. Layout:
//!
//! ```text
//! magic            4 bytes  "NGC1"
//! layer_count      u32      L + 1
//! per layer, bottom (image) layer first:
//!   channels height width stride kernel_h kernel_w   6 x u32
//!   phi_id u8, phi_slope f64, g_id u8, g_slope f64
//! tied_error       u8       1 = error kernels are the transposed kernels
//! bias             u8       1 = bias maps are learnable and stored
//! beta gamma lambda mu_z sigma_z   5 x f64
//! steps            u32
//! kernels          f32      W^1 .. W^L, each [C_l, C_{l-1}, kh, kw] row-major
//! error kernels    f32      E^1 .. E^L, same shapes (only when untied)
//! biases           f32      b^1 .. b^L, each [C_{l-1}, H_{l-1}, W_{l-1}] (only when enabled)
//! optimizer_id     u8       0 = norm-sgd, 1 = adam
//! alpha beta1 beta2 eps     4 x f64
//! step             u64
//! has_moments      u8
//! moments          f32      first moments then second moments, one tensor per
//!                           stored parameter in the order above (only when has_moments)
//! epochs_completed u64
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::io_util::write_atomic;
use crate::tensor::{Activation, Tensor};

use super::learning::{Optimizer, OptimizerKind};
use super::model::ConvNgcModel;
use super::spec::{Hyper, LayerSpec, ModelSpec};
use super::NgcError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NGC1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint magic {0:?}, expected \"NGC1\"")]
    Magic([u8; 4]),
    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint has {0} trailing bytes")]
    Trailing(usize),
    #[error("checkpoint field {field}: {msg}")]
    Field { field: &'static str, msg: String },
    #[error(transparent)]
    Model(#[from] NgcError),
}

/// Model parameters, optimizer state and training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ConvNgcModel<f32>,
    pub optimizer: Optimizer<f32>,
    pub epochs_completed: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &Tensor<f32>) {
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n - (self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn flag(&mut self, field: &'static str) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CheckpointError::Field {
                field,
                msg: format!("expected 0 or 1, got {v}"),
            }),
        }
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor<f32>, CheckpointError> {
        let n: usize = shape.iter().product();
        let bytes = self.take(n * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor::from_vec(shape, data).expect("length matches shape"))
    }
}

fn activation(id: u8, slope: f64, field: &'static str) -> Result<Activation, CheckpointError> {
    Activation::from_id(id, slope).ok_or(CheckpointError::Field {
        field,
        msg: format!("unknown activation id {id}"),
    })
}

impl Checkpoint {
    pub fn new(model: ConvNgcModel<f32>, optimizer: Optimizer<f32>) -> Self {
        Checkpoint {
            model,
            optimizer,
            epochs_completed: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.model.spec();
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(spec.layers.len());
        for l in &spec.layers {
            for v in [l.channels, l.height, l.width, l.stride, l.kernel_h, l.kernel_w] {
                w.u32(v);
            }
            w.u8(l.phi.id());
            w.f64(l.phi.slope());
            w.u8(l.g.id());
            w.f64(l.g.slope());
        }
        w.u8(spec.tied_error as u8);
        w.u8(spec.bias as u8);
        let h = &spec.hyper;
        for v in [h.beta, h.gamma, h.lambda, h.mu_z, h.sigma_z] {
            w.f64(v);
        }
        w.u32(h.steps);
        let params = self.model.parameters();
        for p in &params {
            w.tensor(p);
        }
        let opt = &self.optimizer;
        w.u8(opt.kind.id());
        for v in [opt.alpha, opt.beta1, opt.beta2, opt.eps] {
            w.f64(v);
        }
        w.u64(opt.step);
        let has_moments = !opt.m.is_empty();
        w.u8(has_moments as u8);
        if has_moments {
            for t in opt.m.iter().chain(&opt.v) {
                w.tensor(t);
            }
        }
        w.u64(self.epochs_completed);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Magic(magic));
        }
        let count = r.u32()?;
        if !(2..=64).contains(&count) {
            return Err(CheckpointError::Field {
                field: "layer_count",
                msg: format!("{count} is out of range"),
            });
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (channels, height, width) = (r.u32()?, r.u32()?, r.u32()?);
            let (stride, kernel_h, kernel_w) = (r.u32()?, r.u32()?, r.u32()?);
            let (phi_id, phi_slope) = (r.u8()?, r.f64()?);
            let (g_id, g_slope) = (r.u8()?, r.f64()?);
            layers.push(LayerSpec {
                channels,
                height,
                width,
                stride,
                kernel_h,
                kernel_w,
                phi: activation(phi_id, phi_slope, "phi")?,
                g: activation(g_id, g_slope, "g")?,
            });
        }
        let tied_error = r.flag("tied_error")?;
        let bias = r.flag("bias")?;
        let hyper = Hyper {
            beta: r.f64()?,
            gamma: r.f64()?,
            lambda: r.f64()?,
            mu_z: r.f64()?,
            sigma_z: r.f64()?,
            steps: r.u32()?,
        };
        let spec = ModelSpec {
            layers,
            tied_error,
            bias,
            hyper,
        };
        spec.validate()?;
        let top = spec.top();
        let mut weights = Vec::with_capacity(top);
        for l in 1..=top {
            weights.push(r.tensor(&spec.kernel_shape(l))?);
        }
        let error_weights = if tied_error {
            None
        } else {
            let mut e = Vec::with_capacity(top);
            for l in 1..=top {
                e.push(r.tensor(&spec.kernel_shape(l))?);
            }
            Some(e)
        };
        let mut biases = Vec::with_capacity(top);
        for l in 1..=top {
            let shape = spec.map_shape(l - 1);
            biases.push(if bias { r.tensor(&shape)? } else { Tensor::zeros(&shape) });
        }
        let model = ConvNgcModel::from_parts(spec, weights, error_weights, biases)?;
        let kind = OptimizerKind::from_id(r.u8()?)?;
        let mut optimizer = Optimizer::new(kind, r.f64()?);
        optimizer.beta1 = r.f64()?;
        optimizer.beta2 = r.f64()?;
        optimizer.eps = r.f64()?;
        optimizer.step = r.u64()?;
        if r.flag("has_moments")? {
            let shapes: Vec<Vec<usize>> = model.parameters().iter().map(|p| p.shape().to_vec()).collect();
            for s in &shapes {
                let t = r.tensor(s)?;
                optimizer.m.push(t);
            }
            for s in &shapes {
                let t = r.tensor(s)?;
                optimizer.v.push(t);
            }
        }
        let epochs_completed = r.u64()?;
        if r.pos != buf.len() {
            return Err(CheckpointError::Trailing(buf.len() - r.pos));
        }
        Ok(Checkpoint {
            model,
            optimizer,
            epochs_completed,
        })
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
