//! Experiment runner: configuration, the training loop, evaluation,
//! metrics CSV emission, binary checkpoints, and the gradient-check and
//! parameter-count utilities behind the CLI.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::bptt::gradient_check;
use crate::cells::{param_count, CellKind, CellParams};
use crate::data::{
    load_mnist_idx, synthetic_dataset, to_pixel_sequences, to_row_sequences, SequenceDataset,
};
use crate::error::{Error, Result};
use crate::model::{accuracy, loss_and_grad, ClassifierParams};
use crate::numkernel::SeededRng;
use crate::optim::{Adam, Optimizer, RmsProp};

pub const DATA_DIR_ENV: &str = "GRNN_DATA_DIR";

/// How images are presented to the cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceMode {
    /// 28 timesteps of 28 pixels; default 50 hidden units.
    Rows28,
    /// 784 scalar timesteps; default 100 hidden units.
    Pixels784,
    /// Built-in class-conditional data; no files needed.
    Synthetic,
}

impl SequenceMode {
    pub fn name(self) -> &'static str {
        match self {
            SequenceMode::Rows28 => "rows28",
            SequenceMode::Pixels784 => "pixels784",
            SequenceMode::Synthetic => "synthetic",
        }
    }

    pub fn default_hidden(self) -> usize {
        match self {
            SequenceMode::Rows28 => 50,
            SequenceMode::Pixels784 => 100,
            SequenceMode::Synthetic => 16,
        }
    }
}

impl fmt::Display for SequenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SequenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rows28" => Ok(SequenceMode::Rows28),
            "pixels784" => Ok(SequenceMode::Pixels784),
            "synthetic" => Ok(SequenceMode::Synthetic),
            other => Err(format!("unknown sequence mode '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

/// Shape of the built-in synthetic data used by `SequenceMode::Synthetic`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub seq_len: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seq_len: 10,
            input_dim: 5,
            num_classes: 3,
            train_count: 300,
            test_count: 90,
            noise: 0.05,
        }
    }
}

/// One experiment's configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub cell: CellKind,
    /// Hidden size; defaults per mode when `None`.
    pub hidden: Option<usize>,
    pub mode: SequenceMode,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Optional global L2 gradient clip applied to the averaged batch gradient.
    pub clip_norm: Option<f64>,
    /// When set, wall-clock seconds are recorded as zero so two identical
    /// runs produce byte-identical metrics files.
    pub deterministic: bool,
    /// Optional cap on the number of training examples (smoke tests).
    pub train_limit: Option<usize>,
    pub synthetic: SyntheticSpec,
}

impl RunConfig {
    pub fn new(cell: CellKind, mode: SequenceMode) -> Self {
        RunConfig {
            cell,
            hidden: None,
            mode,
            lr: 1e-3,
            optimizer: OptimizerKind::RmsProp,
            batch_size: 100,
            epochs: 1,
            seed: 1,
            data_dir: None,
            metrics_path: None,
            checkpoint_path: None,
            clip_norm: None,
            deterministic: false,
            train_limit: None,
            synthetic: SyntheticSpec::default(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.unwrap_or_else(|| self.mode.default_hidden())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Input(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Input("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Input("batch size must be at least 1".into()));
        }
        if self.hidden_size() < 1 {
            return Err(Error::Input("hidden size must be at least 1".into()));
        }
        if let Some(clip) = self.clip_norm {
            if !clip.is_finite() || clip <= 0.0 {
                return Err(Error::Input("clip norm must be positive".into()));
            }
        }
        Ok(())
    }

    /// Data directory resolution: explicit flag, then `GRNN_DATA_DIR`, then
    /// `./data`.
    pub fn resolved_data_dir(&self) -> PathBuf {
        if let Some(dir) = &self.data_dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("data")
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

/// Result of a training run: per-epoch metrics plus the final parameters.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub params: ClassifierParams,
}

fn find_idx_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!(
            "missing {stem}[.gz] under {} (set --data-dir or {DATA_DIR_ENV})",
            dir.display()
        ),
    )))
}

/// Load the train and test splits for a config's sequence mode.
pub fn load_datasets(config: &RunConfig) -> Result<(SequenceDataset, SequenceDataset)> {
    match config.mode {
        SequenceMode::Synthetic => {
            let spec = config.synthetic;
            // One stream for both splits, offset from the training seed so
            // data never depends on model init draws.
            let mut rng = SeededRng::new(config.seed ^ 0x5EED_DA7A);
            let train = synthetic_dataset(
                &mut rng,
                spec.seq_len,
                spec.input_dim,
                spec.num_classes,
                spec.train_count,
                spec.noise,
            );
            let test = synthetic_dataset(
                &mut rng,
                spec.seq_len,
                spec.input_dim,
                spec.num_classes,
                spec.test_count,
                spec.noise,
            );
            Ok((train, test))
        }
        SequenceMode::Rows28 | SequenceMode::Pixels784 => {
            let dir = config.resolved_data_dir();
            let train_raw = load_mnist_idx(
                &find_idx_file(&dir, "train-images-idx3-ubyte")?,
                &find_idx_file(&dir, "train-labels-idx1-ubyte")?,
            )?;
            let test_raw = load_mnist_idx(
                &find_idx_file(&dir, "t10k-images-idx3-ubyte")?,
                &find_idx_file(&dir, "t10k-labels-idx1-ubyte")?,
            )?;
            let (train, test) = if config.mode == SequenceMode::Rows28 {
                (to_row_sequences(&train_raw)?, to_row_sequences(&test_raw)?)
            } else {
                (
                    to_pixel_sequences(&train_raw)?,
                    to_pixel_sequences(&test_raw)?,
                )
            };
            Ok((train, test))
        }
    }
}

fn make_optimizer(config: &RunConfig, len: usize) -> Optimizer {
    match config.optimizer {
        OptimizerKind::RmsProp => Optimizer::RmsProp(RmsProp::new(config.lr, len)),
        OptimizerKind::Adam => Optimizer::Adam(Adam::new(config.lr, len)),
    }
}

/// Mean loss, fraction correct, and mean gradient over one batch. Examples
/// are evaluated in parallel and reduced in index order, so the sum is
/// bit-stable regardless of thread count.
fn batch_step(
    params: &ClassifierParams,
    dataset: &SequenceDataset,
    batch: &[usize],
) -> Result<(f64, usize, Vec<f64>)> {
    let evals = batch
        .par_iter()
        .map(|&i| {
            let ex = &dataset.examples[i];
            loss_and_grad(params, &ex.xs, ex.label)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut grad_sum = vec![0.0; params.flat_len()];
    for (eval, &i) in evals.iter().zip(batch) {
        loss_sum += eval.loss;
        correct += usize::from(eval.prediction.class == dataset.examples[i].label);
        for (acc, g) in grad_sum.iter_mut().zip(eval.grads.flatten()) {
            *acc += g;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grad_sum {
        *g *= scale;
    }
    Ok((loss_sum, correct, grad_sum))
}

fn clip_to_norm(grads: &mut [f64], max_norm: f64) {
    let norm: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

/// Core loop, shared by `run_train` and tests that need to start from given
/// parameters. Trains in place and returns per-epoch metrics.
pub(crate) fn train_loop(
    params: &mut ClassifierParams,
    train: &SequenceDataset,
    test: &SequenceDataset,
    config: &RunConfig,
    rng: &mut SeededRng,
) -> Result<Vec<EpochMetrics>> {
    let mut optimizer = make_optimizer(config, params.flat_len());
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for (batch_idx, batch) in train
            .batches(config.batch_size, rng, true)
            .into_iter()
            .enumerate()
        {
            let (batch_loss, batch_correct, mut grads) = batch_step(params, train, &batch)?;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            loss_sum += batch_loss;
            correct += batch_correct;
            if let Some(max_norm) = config.clip_norm {
                clip_to_norm(&mut grads, max_norm);
            }
            let mut flat = params.flatten();
            optimizer.update(&mut flat, &grads).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {batch_idx}: {msg}"
                )),
                other => other,
            })?;
            params.assign_from_flat(&flat)?;
        }

        let test_acc = accuracy(params, test)?;
        let seconds = if config.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            test_acc,
            seconds,
        });
    }
    Ok(metrics)
}

/// Full training run: build the model from the config, train, and write the
/// metrics CSV and final checkpoint when paths are configured.
pub fn run_train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (mut train, test) = load_datasets(config)?;
    if let Some(limit) = config.train_limit {
        train = train.take(limit);
    }

    let n = config.hidden_size();
    let mut rng = SeededRng::new(config.seed);
    let mut params = ClassifierParams::init(
        config.cell,
        n,
        train.input_dim,
        train.num_classes,
        &mut rng,
    );

    let metrics = train_loop(&mut params, &train, &test, config, &mut rng)?;

    if let Some(path) = &config.metrics_path {
        write_metrics_csv(path, &metrics)?;
    }
    if let Some(path) = &config.checkpoint_path {
        save_checkpoint(path, &params)?;
    }
    Ok(TrainOutcome { metrics, params })
}

/// Load a checkpoint and report accuracy on the config's test split. The
/// checkpoint schema must match the config's cell kind and sizes.
pub fn run_eval(checkpoint: &Path, config: &RunConfig) -> Result<f64> {
    let params = load_checkpoint(checkpoint)?;
    let (_, test) = load_datasets(config)?;
    if params.cell.kind != config.cell {
        return Err(Error::Format(format!(
            "checkpoint holds a {} cell but the config asks for {}",
            params.cell.kind, config.cell
        )));
    }
    if params.cell.n != config.hidden_size()
        || params.cell.m != test.input_dim
        || params.classes() != test.num_classes
    {
        return Err(Error::Format(format!(
            "checkpoint schema {}x{} -> {} does not match config {}x{} -> {}",
            params.cell.n,
            params.cell.m,
            params.classes(),
            config.hidden_size(),
            test.input_dim,
            test.num_classes
        )));
    }
    accuracy(&params, &test)
}

/// Gradient-check threshold for `run_gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckRow {
    pub kind: CellKind,
    pub max_rel_error: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// Run the finite-difference oracle for every cell kind on seeded small
/// instances; one row per kind.
pub fn run_gradcheck(seed: u64) -> Result<Vec<GradcheckRow>> {
    let mut rows = Vec::with_capacity(CellKind::ALL.len());
    for kind in CellKind::ALL {
        let mut rng = SeededRng::new(seed ^ kind.tag() as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let n = 2 + rng.index(4); // 2..=5
            let m = 1 + rng.index(4); // 1..=4
            let t = 2 + rng.index(4); // 2..=5
            let params = CellParams::init(kind, n, m, &mut rng);
            let xs: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect();
            let g: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let g2 = g.clone();
            let err = gradient_check(
                &params,
                &xs,
                move |h| h.iter().zip(&g).map(|(a, b)| a * b).sum(),
                move |_| g2.clone(),
            )?;
            worst = worst.max(err);
        }
        rows.push(GradcheckRow {
            kind,
            max_rel_error: worst,
        });
    }
    Ok(rows)
}

/// Cell-only parameter counts for every kind, with readout-inclusive totals
/// when a class count is given.
pub fn param_count_table(n: usize, m: usize, k: Option<usize>) -> Vec<(CellKind, usize, Option<usize>)> {
    CellKind::ALL
        .into_iter()
        .map(|kind| {
            let cell = param_count(kind, n, m);
            (kind, cell, k.map(|k| cell + k * n + k))
        })
        .collect()
}

/// Metrics CSV: fixed header, one row per epoch, shortest round-trip float
/// formatting (full precision).
pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,train_acc,test_acc,seconds\n");
    for row in metrics {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.train_loss, row.train_acc, row.test_acc, row.seconds
        ));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"GRNN";
const CHECKPOINT_VERSION: u32 = 1;

/// Checkpoint layout: `GRNN` magic, version u32, cell-kind u8, precision u8
/// (4 or 8), then n, m, k as u32, then the flat parameter payload (cell
/// enumeration order, readout matrix row-major, readout bias) as
/// little-endian floats of the stated precision. Everything after the magic
/// is little-endian. Saving always writes f64; loading accepts either width.
pub fn save_checkpoint(path: &Path, params: &ClassifierParams) -> Result<()> {
    let flat = params.flatten();
    let mut bytes = Vec::with_capacity(22 + 8 * flat.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.push(params.cell.kind.tag());
    bytes.push(8u8);
    bytes.extend_from_slice(&(params.cell.n as u32).to_le_bytes());
    bytes.extend_from_slice(&(params.cell.m as u32).to_le_bytes());
    bytes.extend_from_slice(&(params.classes() as u32).to_le_bytes());
    for value in flat {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierParams> {
    let bytes = fs::read(path)?;
    let header = |range: std::ops::Range<usize>| -> Result<&[u8]> {
        bytes
            .get(range)
            .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
    };
    if header(0..4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad checkpoint magic",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(header(4..8)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let kind = CellKind::from_tag(header(8..9)?[0])?;
    let precision = header(9..10)?[0];
    if precision != 4 && precision != 8 {
        return Err(Error::Format(format!(
            "{}: precision byte must be 4 or 8, got {precision}",
            path.display()
        )));
    }
    let n = u32::from_le_bytes(header(10..14)?.try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(header(14..18)?.try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(header(18..22)?.try_into().unwrap()) as usize;

    let mut params = ClassifierParams::zeros(kind, n, m, k);
    let expected = 22 + precision as usize * params.flat_len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {expected} for {} parameters at precision {precision}",
            path.display(),
            bytes.len(),
            params.flat_len()
        )));
    }
    let payload = &bytes[22..];
    let flat: Vec<f64> = if precision == 8 {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    params.assign_from_flat(&flat)?;
    Ok(params)
}
