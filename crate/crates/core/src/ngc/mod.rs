//! Convolutional neural generative coding.
//!
//! Each layer `l` holds `C_l` state maps `z^l`. Layer `l` predicts layer
//! `l - 1` by transposed convolution, error maps `e = z - z_bar` drive the
//! state corrections, and after the stimulus window the kernels move along
//! a local Hebbian displacement.

mod checkpoint;
mod inference;
mod learning;
mod model;
mod spec;

use thiserror::Error;

use crate::tensor::TensorError;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use inference::{
    ancestral_init, correct_states, correction_directions, predict_all, predict_layer, run_inference, step, ClampMode,
    InferenceState,
};
pub use learning::{apply_updates, compute_updates, Optimizer, OptimizerKind, Updates};
pub use model::{ConvNgcModel, WEIGHT_INIT_STD};
pub use spec::{Hyper, LayerSpec, ModelSpec, DEFAULT_CHANNELS_TOP_DOWN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NgcError {
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("stimulus window must be at least 1 step, got {0}")]
    InvalidSteps(usize),
    #[error("input batch has shape {actual:?}, model expects {expected:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("unknown optimizer {0:?} (expected \"adam\" or \"norm-sgd\")")]
    UnknownOptimizer(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, NgcError>;
