//! Flat `key = value` training configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::ngc::{Hyper, ModelSpec, OptimizerKind, DEFAULT_CHANNELS_TOP_DOWN};
use crate::tensor::Activation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Training images, as a data source string.
    pub train_data: String,
    /// Held-out test images.
    pub test_data: String,
    /// Use only the first `n` loaded training images (0 keeps all).
    pub train_limit: usize,
    pub test_limit: usize,
    /// Training images set aside for validation, taken from the end.
    pub val_split: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub alpha: f64,
    pub steps: usize,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub mu_z: f64,
    pub sigma_z: f64,
    /// Channels per layer, top layer first, image last.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub image_size: usize,
    pub tied_error: bool,
    pub bias: bool,
    pub seed: u64,
    /// Save a checkpoint every `n` epochs (0 saves only the final one).
    pub checkpoint_every: usize,
    /// Validate every `n` epochs (0 disables validation).
    pub eval_every: usize,
    /// Validation images used per validation pass (0 uses all).
    pub eval_limit: usize,
    /// Standard deviation of denoising corruption on the `[0, 1]` scale.
    pub sigma: f64,
    /// Record wall-clock milliseconds in the training log; when false the
    /// column is written as 0 so logs are reproducible byte for byte.
    pub log_timing: bool,
    /// Worker threads (0 lets the runtime decide).
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = Hyper::default();
        TrainConfig {
            train_data: String::new(),
            test_data: String::new(),
            train_limit: 0,
            test_limit: 0,
            val_split: 5000,
            epochs: 10,
            batch_size: 500,
            optimizer: OptimizerKind::Adam,
            alpha: 0.001,
            steps: h.steps,
            beta: h.beta,
            gamma: h.gamma,
            lambda: h.lambda,
            mu_z: h.mu_z,
            sigma_z: h.sigma_z,
            channels: DEFAULT_CHANNELS_TOP_DOWN.to_vec(),
            kernel: 3,
            stride: 2,
            image_size: 32,
            tied_error: true,
            bias: false,
            seed: 1,
            checkpoint_every: 1,
            eval_every: 1,
            eval_limit: 500,
            sigma: 0.1,
            log_timing: true,
            threads: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
        }),
    }
}

/// Every recognised key, in the order [`TrainConfig::to_kv`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "train_data",
    "test_data",
    "train_limit",
    "test_limit",
    "val_split",
    "epochs",
    "batch_size",
    "optimizer",
    "alpha",
    "T",
    "beta",
    "gamma",
    "lambda",
    "mu_z",
    "sigma_z",
    "channels",
    "kernel",
    "stride",
    "image_size",
    "tied_error",
    "bias",
    "seed",
    "checkpoint_every",
    "eval_every",
    "eval_limit",
    "sigma",
    "log_timing",
    "threads",
];

impl TrainConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim() {
            "train_data" => self.train_data = value.to_string(),
            "test_data" => self.test_data = value.to_string(),
            "train_limit" => self.train_limit = parse(key, value)?,
            "test_limit" => self.test_limit = parse(key, value)?,
            "val_split" => self.val_split = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "optimizer" => self.optimizer = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "T" | "steps" => self.steps = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "mu_z" => self.mu_z = parse(key, value)?,
            "sigma_z" => self.sigma_z = parse(key, value)?,
            "channels" => {
                self.channels = value
                    .split(',')
                    .map(|c| parse(key, c.trim()))
                    .collect::<Result<_, _>>()?
            }
            "kernel" => self.kernel = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "tied_error" => self.tied_error = parse_bool(key, value)?,
            "bias" => self.bias = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_limit" => self.eval_limit = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "log_timing" => self.log_timing = parse_bool(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut c = TrainConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    /// One `key = value` line per key; parses back to an equal config.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for &k in CONFIG_KEYS {
            let _ = writeln!(s, "{k} = {}", self.value_of(k));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "train_data" => self.train_data.clone(),
            "test_data" => self.test_data.clone(),
            "train_limit" => self.train_limit.to_string(),
            "test_limit" => self.test_limit.to_string(),
            "val_split" => self.val_split.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "alpha" => self.alpha.to_string(),
            "T" => self.steps.to_string(),
            "beta" => self.beta.to_string(),
            "gamma" => self.gamma.to_string(),
            "lambda" => self.lambda.to_string(),
            "mu_z" => self.mu_z.to_string(),
            "sigma_z" => self.sigma_z.to_string(),
            "channels" => self
                .channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "kernel" => self.kernel.to_string(),
            "stride" => self.stride.to_string(),
            "image_size" => self.image_size.to_string(),
            "tied_error" => self.tied_error.to_string(),
            "bias" => self.bias.to_string(),
            "seed" => self.seed.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_limit" => self.eval_limit.to_string(),
            "sigma" => self.sigma.to_string(),
            "log_timing" => self.log_timing.to_string(),
            "threads" => self.threads.to_string(),
            _ => unreachable!("key list and match are in sync"),
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
            steps: self.steps,
            mu_z: self.mu_z,
            sigma_z: self.sigma_z,
        }
    }

    /// Model architecture described by this config.
    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let mut spec = ModelSpec::from_top_down(
            &self.channels,
            self.image_size,
            self.image_size,
            self.kernel,
            self.stride,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?
        .with_activations(Activation::leaky(), Activation::Identity);
        spec.tied_error = self.tied_error;
        spec.bias = self.bias;
        spec.hyper = self.hyper();
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.steps < 1 {
            return bad(format!("T must be at least 1, got {}", self.steps));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("sigma_z", self.sigma_z),
            ("sigma", self.sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        self.model_spec().map(|_| ())
    }
}
