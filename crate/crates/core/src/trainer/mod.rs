//! Training loop and evaluation protocols.
//!
//! Every batch starts from a fresh ancestral initialisation, runs clamped
//! inference for `T` steps, and then takes one optimizer step along the
//! Hebbian kernel displacements. All randomness comes from ChaCha streams
//! keyed by `(seed, purpose, epoch, batch)`, so a resumed run replays the
//! same batches and latents as an uninterrupted one.

mod config;
mod eval;

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{batch_iter, DataError, DataSource, ImageBatch};
use crate::metrics::{MetricsError, Stat};
use crate::ngc::{
    apply_updates, compute_updates, run_inference, Checkpoint, CheckpointError, ClampMode, ConvNgcModel, NgcError,
    Optimizer,
};

pub use config::{ConfigError, TrainConfig, CONFIG_KEYS};
pub use eval::{
    evaluate_denoising, evaluate_ood, evaluate_reconstruction, noise_seed, reconstruct, DenoiseReport, EvalOptions,
};

/// File names written into a training output directory.
pub const LOG_FILE: &str = "train.log";
pub const EPOCH_FILE: &str = "epochs.log";
pub const CHECKPOINT_FILE: &str = "checkpoint.ngc";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] NgcError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot resume: {0}")]
    Resume(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Independent random streams used during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Latent = 3,
    Eval = 4,
    Noise = 5,
}

/// Deterministic generator for one `(seed, purpose, epoch, batch)` cell.
pub fn stream_rng(seed: u64, purpose: Purpose, epoch: u64, batch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([seed, purpose as u64, epoch, batch]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// One line of the training log: `epoch,batch,tod,wall_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub batch: usize,
    /// Total discrepancy after the last prediction phase of the window,
    /// averaged over the samples in the batch.
    pub tod: f64,
    pub wall_ms: u64,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.batch, self.tod, self.wall_ms)
    }

    pub fn parse(line: &str) -> Option<LogRecord> {
        let mut it = line.trim().split(',');
        let r = LogRecord {
            epoch: it.next()?.trim().parse().ok()?,
            batch: it.next()?.trim().parse().ok()?,
            tod: it.next()?.trim().parse().ok()?,
            wall_ms: it.next()?.trim().parse().ok()?,
        };
        it.next().is_none().then_some(r)
    }
}

/// Per-epoch summary: mean batch ToD and optional validation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_tod: f64,
    pub val_mse: Option<Stat>,
    pub val_ssim: Option<Stat>,
    pub val_psnr: Option<Stat>,
}

impl EpochSummary {
    /// `epoch,mean_tod,val_mse,val_ssim,val_psnr`; missing scores are `nan`.
    pub fn to_line(&self) -> String {
        let m = |s: &Option<Stat>| s.map_or(f64::NAN, |s| s.mean);
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.mean_tod,
            m(&self.val_mse),
            m(&self.val_ssim),
            m(&self.val_psnr)
        )
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Records produced by this call (not those of earlier, resumed runs).
    pub log: Vec<LogRecord>,
    pub epochs: Vec<EpochSummary>,
}

/// Freshly initialised model and optimizer for `config`.
pub fn init_checkpoint(config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Purpose::Init, 0, 0);
    let model = ConvNgcModel::init(config.model_spec()?, &mut rng)?;
    Ok(Checkpoint::new(model, Optimizer::new(config.optimizer, config.alpha)))
}

/// Loads `config.train_data`, applies `train_limit` and splits off the
/// last `val_split` images for validation.
pub fn load_training_data(config: &TrainConfig) -> Result<(ImageBatch, Option<ImageBatch>)> {
    let mut all = load_source(&config.train_data, config.train_limit)?;
    if config.val_split == 0 {
        return Ok((all, None));
    }
    if config.val_split >= all.len() {
        return Err(DataError::Shape(format!(
            "val_split {} leaves no training images out of {}",
            config.val_split,
            all.len()
        ))
        .into());
    }
    let cut = all.len() - config.val_split;
    let val = all.range(cut, all.len());
    all = all.range(0, cut);
    Ok((all, Some(val)))
}

/// Loads `config.test_data` limited to `test_limit` images.
pub fn load_test_data(config: &TrainConfig) -> Result<ImageBatch> {
    load_source(&config.test_data, config.test_limit)
}

fn load_source(source: &str, limit: usize) -> Result<ImageBatch> {
    let batch = source.parse::<DataSource>()?.load()?;
    Ok(if limit > 0 && limit < batch.len() {
        batch.range(0, limit)
    } else {
        batch
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn append(path: &Path, text: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

fn check_resume(config: &TrainConfig, start: &Checkpoint) -> Result<()> {
    let want = config.model_spec()?;
    let have = start.model.spec();
    if want.layers != have.layers || want.tied_error != have.tied_error || want.bias != have.bias {
        return Err(TrainError::Resume(
            "checkpoint architecture differs from the configuration".into(),
        ));
    }
    if start.optimizer.kind != config.optimizer {
        return Err(TrainError::Resume(format!(
            "checkpoint optimizer is {}, configuration asks for {}",
            start.optimizer.kind, config.optimizer
        )));
    }
    if start.epochs_completed > config.epochs as u64 {
        return Err(TrainError::Resume(format!(
            "checkpoint has {} epochs, configuration stops at {}",
            start.epochs_completed, config.epochs
        )));
    }
    Ok(())
}

/// Trains from `start` (a fresh [`init_checkpoint`] or a saved one) until
/// `config.epochs` epochs are complete.
///
/// With `out_dir`, log lines are appended to [`LOG_FILE`] and
/// [`EPOCH_FILE`] as they are produced and [`CHECKPOINT_FILE`] is
/// replaced atomically at the configured cadence and at the end.
pub fn train(
    config: &TrainConfig,
    data: &ImageBatch,
    val: Option<&ImageBatch>,
    start: Checkpoint,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_resume(config, &start)?;
    let done = start.epochs_completed as usize;
    let mut ckpt = start;
    *ckpt.model.hyper_mut() = config.hyper();
    ckpt.optimizer.alpha = config.alpha;
    let expect = ckpt.model.spec().map_shape(0);
    if data.image_shape() != expect {
        return Err(DataError::Shape(format!(
            "training images are {:?}, model expects {:?}",
            data.image_shape(),
            expect
        ))
        .into());
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let save = |ckpt: &Checkpoint| -> Result<()> {
        if let Some(dir) = out_dir {
            ckpt.save(&dir.join(CHECKPOINT_FILE))?;
        }
        Ok(())
    };

    let mut log = Vec::new();
    let mut epochs = Vec::new();
    if done == config.epochs {
        save(&ckpt)?;
    }
    for epoch in done..config.epochs {
        let e = epoch as u64;
        let shuffle = stream_rng(config.seed, Purpose::Shuffle, e, 0).next_u64();
        let mut lines = String::new();
        let mut tods = Vec::new();
        for (b, batch) in batch_iter(data, config.batch_size, Some(shuffle)).enumerate() {
            let t0 = Instant::now();
            let mut rng = stream_rng(config.seed, Purpose::Latent, e, b as u64);
            let st = run_inference(&ckpt.model, &batch.data, ClampMode::Clamped, config.steps, &mut rng)?;
            let updates = compute_updates(&ckpt.model, &st);
            apply_updates(&mut ckpt.model, &updates, &mut ckpt.optimizer)?;
            let rec = LogRecord {
                epoch,
                batch: b,
                tod: st.tod_trace.last().copied().unwrap_or(0.0) / batch.len() as f64,
                wall_ms: if config.log_timing {
                    t0.elapsed().as_millis() as u64
                } else {
                    0
                },
            };
            tods.push(rec.tod);
            let _ = writeln!(lines, "{}", rec.to_line());
            if let Some(dir) = out_dir {
                append(&dir.join(LOG_FILE), &format!("{}\n", rec.to_line()))?;
            }
            log.push(rec);
        }
        ckpt.epochs_completed = (epoch + 1) as u64;

        let mut summary = EpochSummary {
            epoch,
            mean_tod: Stat::of(tods).mean,
            val_mse: None,
            val_ssim: None,
            val_psnr: None,
        };
        if let Some(v) = val.filter(|_| config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) {
            let subset = if config.eval_limit > 0 {
                v.range(0, config.eval_limit)
            } else {
                v.clone()
            };
            let opts = EvalOptions {
                steps: config.steps,
                seed: config.seed,
                batch_size: config.batch_size,
            };
            let r = evaluate_reconstruction(&ckpt.model, &subset, &opts)?;
            summary.val_mse = Some(r.mse);
            summary.val_ssim = Some(r.ssim);
            summary.val_psnr = Some(r.psnr);
        }
        if let Some(dir) = out_dir {
            append(&dir.join(EPOCH_FILE), &format!("{}\n", summary.to_line()))?;
        }
        epochs.push(summary);

        let last = epoch + 1 == config.epochs;
        if last || (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
            save(&ckpt)?;
        }
    }
    Ok(TrainOutcome {
        checkpoint: ckpt,
        log,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_lines_round_trip() {
        let r = LogRecord {
            epoch: 3,
            batch: 19,
            tod: 0.1 + 0.2,
            wall_ms: 1234,
        };
        assert_eq!(LogRecord::parse(&r.to_line()), Some(r));
        assert_eq!(LogRecord::parse("1,2,3"), None);
        assert_eq!(LogRecord::parse("1,2,3,4,5"), None);
    }

    #[test]
    fn streams_are_distinct_and_repeatable() {
        let a = stream_rng(1, Purpose::Latent, 2, 3).next_u64();
        assert_eq!(a, stream_rng(1, Purpose::Latent, 2, 3).next_u64());
        assert_ne!(a, stream_rng(1, Purpose::Latent, 2, 4).next_u64());
        assert_ne!(a, stream_rng(1, Purpose::Eval, 2, 3).next_u64());
        assert_ne!(a, stream_rng(2, Purpose::Latent, 2, 3).next_u64());
    }
}
