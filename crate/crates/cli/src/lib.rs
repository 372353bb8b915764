//! `convngc` command-line front end: dataset conversion, training,
//! evaluation and feature-map inspection.
//!
//! Every subcommand writes its artifacts under `--out`, echoes the
//! effective configuration to `config.txt` and finishes by writing
//! `manifest.txt`, which lists every artifact it produced.

pub mod images;

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use convngc::data::{corrupt_gaussian, save_tensor_file, DataError, DataSource, ImageBatch};
use convngc::io_util::write_atomic;
use convngc::metrics::aggregate;
use convngc::ngc::{run_inference, Checkpoint, CheckpointError, ClampMode, ConvNgcModel, NgcError};
use convngc::trainer::{
    evaluate_denoising, evaluate_ood, evaluate_reconstruction, init_checkpoint, load_training_data, noise_seed,
    reconstruct, stream_rng, train, ConfigError, EvalOptions, Purpose, TrainConfig, TrainError, CHECKPOINT_FILE,
    EPOCH_FILE, LOG_FILE,
};

pub const CONFIG_ECHO: &str = "config.txt";
pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] NgcError),
    #[error(transparent)]
    Metrics(#[from] convngc::metrics::MetricsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "convngc",
    version,
    about = "Convolutional neural generative coding for images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the subcommands that run the model.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stimulus window length.
    #[arg(long = "T", value_name = "STEPS")]
    pub steps: Option<usize>,
    /// State update rate.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Worker threads; 1 guarantees a single-threaded run.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Any other config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Recon,
    Denoise,
    Ood,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert IDX, CIFAR-10 binary or tensor files into an NGCT tensor.
    Convert {
        /// Data source (`mnist:<prefix>`, `mnist-gray:<prefix>`, `cifar:<files>`, `ngct:<file>`).
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        /// Output file stem.
        #[arg(long, default_value = "images")]
        name: String,
        /// Keep only the first N images.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Train a model; resumes from `--ckpt` when given.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training data source (overrides `train_data`).
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to resume from.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score reconstructions of a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "recon")]
        mode: Mode,
        /// Corruption standard deviation for `--mode denoise`.
        #[arg(long)]
        sigma: Option<f64>,
        /// Keep only the first N images.
        #[arg(long)]
        limit: Option<usize>,
        /// Independent trials with seeds `seed, seed + 1, ...`.
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Write the first N inputs and reconstructions as PPM images.
        #[arg(long, default_value_t = 0)]
        dump: usize,
        /// Name of the training dataset for OOD tags.
        #[arg(long, default_value = "train")]
        source: String,
        /// Name of the evaluated dataset for OOD tags.
        #[arg(long)]
        target: Option<String>,
    },
    /// Dump every state map of one image as PGM files.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        /// Index of the image within the data source.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert { data, out, name, limit } => cmd_convert(&data, &out, &name, limit),
        Command::Train {
            common,
            data,
            out,
            ckpt,
            epochs,
        } => {
            let mut cfg = resolve(TrainConfig::default(), &common)?;
            if let Some(d) = data {
                cfg.train_data = d;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            in_pool(cfg.threads, || cmd_train(&cfg, ckpt.as_deref(), &out))
        }
        Command::Eval {
            common,
            ckpt,
            data,
            out,
            mode,
            sigma,
            limit,
            trials,
            dump,
            source,
            target,
        } => {
            let checkpoint = Checkpoint::load(&ckpt)?;
            let mut cfg = resolve(config_from_model(&checkpoint.model), &common)?;
            if let Some(s) = sigma {
                cfg.sigma = s;
            }
            cfg.test_data = data;
            if let Some(l) = limit {
                cfg.test_limit = l;
            }
            let target = target.unwrap_or_else(|| dataset_name(&cfg.test_data));
            let job = EvalJob {
                mode,
                trials,
                dump,
                source,
                target,
            };
            in_pool(cfg.threads, || cmd_eval(&cfg, checkpoint.model, &job, &out))
        }
        Command::Inspect {
            common,
            ckpt,
            data,
            out,
            index,
        } => {
            let checkpoint = Checkpoint::load(&ckpt)?;
            let mut cfg = resolve(config_from_model(&checkpoint.model), &common)?;
            cfg.test_data = data;
            in_pool(cfg.threads, || cmd_inspect(&cfg, checkpoint.model, index, &out))
        }
    }
}

/// Applies the config file and then the command-line overrides to `base`.
pub fn resolve(mut base: TrainConfig, common: &Common) -> Result<TrainConfig> {
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        base.apply_kv(&text)?;
    }
    if let Some(s) = common.seed {
        base.seed = s;
    }
    if let Some(t) = common.steps {
        base.steps = t;
    }
    if let Some(b) = common.beta {
        base.beta = b;
    }
    if let Some(n) = common.threads {
        base.threads = n;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        base.set(k, v)?;
    }
    Ok(base)
}

/// Defaults for commands that start from a trained model: the model's
/// own architecture and inference settings.
pub fn config_from_model(model: &ConvNgcModel<f32>) -> TrainConfig {
    let spec = model.spec();
    let h = spec.hyper;
    TrainConfig {
        steps: h.steps,
        beta: h.beta,
        gamma: h.gamma,
        lambda: h.lambda,
        mu_z: h.mu_z,
        sigma_z: h.sigma_z,
        channels: spec.layers.iter().rev().map(|l| l.channels).collect(),
        kernel: spec.layers[1].kernel_h,
        stride: spec.layers[1].stride,
        image_size: spec.layers[0].height,
        tied_error: spec.tied_error,
        bias: spec.bias,
        ..TrainConfig::default()
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(f)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn dataset_name(source: &str) -> String {
    match source.parse::<DataSource>() {
        Ok(DataSource::Mnist { color: true, .. }) => "color-mnist".into(),
        Ok(DataSource::Mnist { color: false, .. }) => "mnist".into(),
        Ok(DataSource::Cifar(_)) => "cifar10".into(),
        Ok(DataSource::Tensor(p)) => p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        Err(_) => source.to_string(),
    }
}

/// Collects artifact names and writes them into the output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, bytes).map_err(io_err(&p))?;
        self.record(name);
        Ok(())
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    fn finish(mut self) -> Result<()> {
        let mut text = String::new();
        for w in &self.written {
            text.push_str(w);
            text.push('\n');
        }
        self.written.clear();
        let p = self.path(MANIFEST);
        write_atomic(&p, text.as_bytes()).map_err(io_err(&p))
    }
}

pub fn cmd_convert(data: &str, out: &Path, name: &str, limit: Option<usize>) -> Result<()> {
    let mut batch = data.parse::<DataSource>()?.load()?;
    if let Some(n) = limit.filter(|&n| n < batch.len()) {
        batch = batch.range(0, n);
    }
    let mut o = Outputs::create(out)?;
    let file = format!("{name}.ngct");
    save_tensor_file(&o.path(&file), &batch.data)?;
    o.record(&file);
    println!(
        "wrote {} images {:?} to {}",
        batch.len(),
        batch.data.shape(),
        o.path(&file).display()
    );
    o.finish()
}

/// Trains according to `cfg`, writing the config echo, logs, checkpoint
/// and manifest under `out`. Resumes from `resume` when given.
pub fn cmd_train(cfg: &TrainConfig, resume: Option<&Path>, out: &Path) -> Result<()> {
    cfg.validate()?;
    let mut o = Outputs::create(out)?;
    let echo = cfg.to_kv();
    print!("{echo}");
    o.write(CONFIG_ECHO, echo.as_bytes())?;
    let start = match resume {
        Some(p) => Checkpoint::load(p)?,
        None => {
            // a fresh run starts fresh logs
            for f in [LOG_FILE, EPOCH_FILE] {
                let p = o.path(f);
                if p.exists() {
                    fs::remove_file(&p).map_err(io_err(&p))?;
                }
            }
            init_checkpoint(cfg)?
        }
    };
    let (data, val) = load_training_data(cfg)?;
    println!(
        "training on {} images, {} held out",
        data.len(),
        val.as_ref().map_or(0, |v| v.len())
    );
    let outcome = train(cfg, &data, val.as_ref(), start, Some(out))?;
    for e in &outcome.epochs {
        println!("epoch {} mean ToD {:.4}", e.epoch, e.mean_tod);
    }
    for f in [LOG_FILE, EPOCH_FILE, CHECKPOINT_FILE] {
        if o.path(f).exists() {
            o.record(f);
        }
    }
    o.finish()
}

/// What `eval` should compute.
#[derive(Debug, Clone)]
pub struct EvalJob {
    pub mode: Mode,
    pub trials: usize,
    pub dump: usize,
    pub source: String,
    pub target: String,
}

fn load_eval_data(cfg: &TrainConfig) -> Result<ImageBatch> {
    let mut data = cfg.test_data.parse::<DataSource>()?.load()?;
    if cfg.test_limit > 0 && cfg.test_limit < data.len() {
        data = data.range(0, cfg.test_limit);
    }
    Ok(data)
}

pub fn cmd_eval(cfg: &TrainConfig, mut model: ConvNgcModel<f32>, job: &EvalJob, out: &Path) -> Result<()> {
    cfg.validate()?;
    if job.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    *model.hyper_mut() = cfg.hyper();
    let mut o = Outputs::create(out)?;
    o.write(CONFIG_ECHO, cfg.to_kv().as_bytes())?;
    let data = load_eval_data(cfg)?;
    let mut reports = Vec::new();
    for trial in 0..job.trials {
        let opts = EvalOptions {
            steps: cfg.steps,
            seed: cfg.seed + trial as u64,
            batch_size: cfg.batch_size,
        };
        let prefix = if job.trials == 1 {
            String::new()
        } else {
            format!("trial{trial}.")
        };
        let report = match job.mode {
            Mode::Recon => evaluate_reconstruction(&model, &data, &opts)?,
            Mode::Ood => evaluate_ood(&model, &data, &job.source, &job.target, &opts)?,
            Mode::Denoise => {
                let d = evaluate_denoising(&model, &data, cfg.sigma, &opts)?;
                o.write(&format!("{prefix}input_metrics.kv"), d.corrupted.to_kv().as_bytes())?;
                o.write(&format!("{prefix}input_metrics.txt"), d.corrupted.to_text().as_bytes())?;
                print!("{}", d.corrupted.to_text());
                d.restored
            }
        };
        print!("{}", report.to_text());
        o.write(&format!("{prefix}metrics.kv"), report.to_kv().as_bytes())?;
        o.write(&format!("{prefix}metrics.txt"), report.to_text().as_bytes())?;
        reports.push(report);
    }
    if job.trials > 1 {
        let summary = aggregate(&reports);
        o.write("summary.kv", summary.to_kv().as_bytes())?;
        print!("{}", summary.to_kv());
    }
    if job.dump > 0 {
        dump_reconstructions(cfg, &model, &data, job, &mut o)?;
    }
    o.finish()
}

fn dump_reconstructions(
    cfg: &TrainConfig,
    model: &ConvNgcModel<f32>,
    data: &ImageBatch,
    job: &EvalJob,
    o: &mut Outputs,
) -> Result<()> {
    let subset = data.range(0, job.dump);
    let opts = EvalOptions {
        steps: cfg.steps,
        seed: cfg.seed,
        batch_size: cfg.batch_size,
    };
    let (input, mode) = match job.mode {
        Mode::Denoise => (
            corrupt_gaussian(&subset, cfg.sigma, noise_seed(cfg.seed))?,
            ClampMode::InitOnly,
        ),
        _ => (subset.clone(), ClampMode::Clamped),
    };
    let recon = reconstruct(model, &input, mode, &opts)?;
    let [c, h, w] = subset.image_shape();
    if c != 3 {
        return Err(CliError::Usage(format!("image dumps need 3 channels, data has {c}")));
    }
    for i in 0..subset.len() {
        o.write(&format!("input_{i:04}.ppm"), &images::ppm(subset.image(i), h, w))?;
        if job.mode == Mode::Denoise {
            o.write(&format!("noisy_{i:04}.ppm"), &images::ppm(input.image(i), h, w))?;
        }
        o.write(&format!("recon_{i:04}.ppm"), &images::ppm(recon.slab(i), h, w))?;
    }
    Ok(())
}

/// Clamped inference on one image; writes every channel of every state
/// layer as `layer{l}_ch{c}.pgm` and the reconstruction as `recon.ppm`.
pub fn cmd_inspect(cfg: &TrainConfig, mut model: ConvNgcModel<f32>, index: usize, out: &Path) -> Result<()> {
    cfg.validate()?;
    *model.hyper_mut() = cfg.hyper();
    let data = load_eval_data(cfg)?;
    if index >= data.len() {
        return Err(CliError::Usage(format!(
            "--index {index} but the data has {} images",
            data.len()
        )));
    }
    let image = data.range(index, index + 1);
    let mut o = Outputs::create(out)?;
    o.write(CONFIG_ECHO, cfg.to_kv().as_bytes())?;
    let mut rng = stream_rng(cfg.seed, Purpose::Eval, 0, 0);
    let st = run_inference(&model, &image.data, ClampMode::Clamped, cfg.steps, &mut rng)?;
    let mut maps = 0;
    for (l, z) in st.z.iter().enumerate() {
        let [c, h, w] = model.spec().map_shape(l);
        let sample = z.slab(0);
        for ch in 0..c {
            o.write(
                &format!("layer{l}_ch{ch:02}.pgm"),
                &images::pgm(&sample[ch * h * w..][..h * w], h, w),
            )?;
            maps += 1;
        }
    }
    let [c, h, w] = model.spec().map_shape(0);
    if c == 3 {
        o.write("recon.ppm", &images::ppm(st.output().slab(0), h, w))?;
    }
    println!("wrote {maps} feature maps for {}", image.ids[0]);
    o.finish()
}
