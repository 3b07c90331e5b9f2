use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::config::{lr_schedule, TrainConfig};
use super::sampler::sample_patch;
use crate::autodiff::{Eval, Graph, Tape};
use crate::config::KvConfig;
use crate::data::{self, ImagePair};
use crate::error::{CheckpointError, DataError, Error, Result};
use crate::metrics::psnr;
use crate::model::{forward, init_params, loss_on_tape, ModelConfig, ParamVars, ParameterStore, SIZE_MULTIPLE};
use crate::tensor::Tensor;

pub const CHECKPOINT_FILE: &str = "checkpoint.rsen";
pub const LOG_FILE: &str = "train_log.csv";
pub const LOG_HEADER: &str = "epoch,iter,lr,loss,val_psnr";

/// One CSV row: the epoch index, total iterations so far, the epoch's
/// learning rate and mean loss, and the monitoring PSNR (NaN when skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_psnr: f64,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let val = if self.val_psnr.is_nan() {
            String::new()
        } else if self.val_psnr.is_infinite() {
            "inf".into()
        } else {
            format!("{:.6}", self.val_psnr)
        };
        format!("{},{},{:e},{:.9e},{}", self.epoch, self.iter, self.lr, self.loss, val)
    }
}

/// Outcome of [`Trainer::run`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub log: Vec<LogRow>,
    pub epochs: usize,
    pub iterations: usize,
}

/// Path of the optimizer-state file stored next to a checkpoint.
pub fn optimizer_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".opt");
    PathBuf::from(s)
}

/// Patch-based Adam training of one network.
pub struct Trainer {
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    params: ParameterStore<f32>,
    adam: AdamState<f32>,
    epoch: usize,
    iteration: usize,
    out_dir: Option<PathBuf>,
    resumed: bool,
}

impl Trainer {
    /// Starts from Glorot-initialized parameters drawn from `cfg.seed`.
    pub fn new(model_cfg: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        model_cfg.validate()?;
        cfg.validate()?;
        let params = init_params(&model_cfg, cfg.seed);
        Ok(Self::from_parts(model_cfg, cfg, params))
    }

    /// Starts from the given parameters.
    pub fn with_params(model_cfg: ModelConfig, cfg: TrainConfig, params: ParameterStore<f32>) -> Result<Self> {
        model_cfg.validate()?;
        cfg.validate()?;
        params.validate(&model_cfg)?;
        Ok(Self::from_parts(model_cfg, cfg, params))
    }

    fn from_parts(model_cfg: ModelConfig, cfg: TrainConfig, params: ParameterStore<f32>) -> Self {
        let adam = AdamState::new(&params);
        let out_dir = cfg.out_dir.clone();
        Trainer {
            model_cfg,
            cfg,
            params,
            adam,
            epoch: 0,
            iteration: 0,
            out_dir,
            resumed: false,
        }
    }

    /// Continues from a checkpoint written by a previous run; epoch and
    /// iteration numbering carry over, as do the Adam moments when the
    /// optimizer file is present.
    pub fn resume(model_cfg: ModelConfig, cfg: TrainConfig, checkpoint: &Path) -> Result<Self> {
        let ck = data::load_checkpoint_for(checkpoint, &model_cfg)?;
        let mut t = Self::with_params(model_cfg, cfg, ck.params)?;
        t.epoch = ck.meta.get_or("state.epoch", 0)?;
        t.iteration = ck.meta.get_or("state.iteration", 0)?;
        let opt = optimizer_path(checkpoint);
        if opt.exists() {
            t.adam = load_adam(&opt, &t.params)?;
        } else {
            log::warn!("no optimizer state at {}; Adam moments restart from zero", opt.display());
        }
        t.resumed = true;
        Ok(t)
    }

    pub fn params(&self) -> &ParameterStore<f32> {
        &self.params
    }

    pub fn into_params(self) -> ParameterStore<f32> {
        self.params
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_cfg
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn adam(&self) -> &AdamState<f32> {
        &self.adam
    }

    /// Resolved model and training configuration plus progress counters.
    pub fn resolved_config(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        self.model_cfg.write_kv(&mut kv);
        self.cfg.write_kv(&mut kv);
        kv.set("state.epoch", self.epoch);
        kv.set("state.iteration", self.iteration);
        kv
    }

    /// Loss of the current parameters on a batch, without updating them.
    pub fn loss(&self, rainy: &Tensor<f32>, clean: &Tensor<f32>) -> Result<f64> {
        let g = Eval::new();
        let vars = ParamVars::new(&g, &self.params);
        let pred = forward(&g, &vars, &self.model_cfg, rainy)?;
        Ok(f64::from(crate::tensor::mse(&pred.derained, clean)?))
    }

    /// One Adam iteration on a batch; returns the loss before the update.
    pub fn step(&mut self, rainy: &Tensor<f32>, clean: &Tensor<f32>, lr: f64) -> Result<f64> {
        let tape = Tape::new();
        let (loss, vars) = loss_on_tape(&tape, &self.params, &self.model_cfg, rainy, clean)?;
        let loss_value = f64::from(tape.value(&loss).data()[0]);
        let divergence = |reason: String| Error::Divergence {
            epoch: self.epoch,
            iter: self.iteration,
            reason,
        };
        if !loss_value.is_finite() {
            return Err(divergence(format!("loss is {loss_value}")));
        }
        let grads = tape.backward(loss)?;
        let mut g = ParameterStore::new();
        for (name, v) in vars.iter() {
            g.insert(name, grads.wrt(*v));
        }
        drop(tape);
        match adam_step(&mut self.params, &g, &mut self.adam, lr) {
            Err(Error::NonFiniteGradient { name }) => Err(divergence(format!("non-finite gradient for `{name}`"))),
            Err(e) => Err(e),
            Ok(()) => {
                self.iteration += 1;
                Ok(loss_value)
            }
        }
    }

    /// PSNR of the derained monitoring image against its clean version.
    pub fn monitor_psnr(&self, pair: &ImagePair) -> Result<f64> {
        let g = Eval::new();
        let vars = ParamVars::new(&g, &self.params);
        let pred = forward(&g, &vars, &self.model_cfg, &pair.rainy)?;
        Ok(psnr(&pred.derained, &pair.clean)?)
    }

    fn done(&self) -> bool {
        self.epoch >= self.cfg.epochs || self.cfg.max_iterations.is_some_and(|m| self.iteration >= m)
    }

    /// Writes the checkpoint and optimizer state to `path` atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = self.resolved_config();
        let mut moments = ParameterStore::new();
        for (name, t) in self.adam.m.iter() {
            moments.insert(format!("m/{name}"), t.clone());
        }
        for (name, t) in self.adam.v.iter() {
            moments.insert(format!("v/{name}"), t.clone());
        }
        let mut opt_meta = KvConfig::default();
        opt_meta.set("state.adam_t", self.adam.t);
        write_atomic(&optimizer_path(path), &data::encode_container(&opt_meta, &moments))?;
        data::save_checkpoint(path, &self.params, &self.model_cfg, Some(&meta))?;
        Ok(())
    }

    fn open_log(&self) -> Result<Option<File>> {
        let Some(dir) = &self.out_dir else { return Ok(None) };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        if self.resumed && path.exists() {
            return Ok(Some(OpenOptions::new().append(true).open(path)?));
        }
        let mut f = File::create(path)?;
        for line in self.resolved_config().to_text().lines() {
            writeln!(f, "# {line}")?;
        }
        writeln!(f, "{LOG_HEADER}")?;
        Ok(Some(f))
    }

    /// Trains until `epochs` (or the iteration cap) is reached.
    ///
    /// Each epoch visits every training pair once in a seeded random order,
    /// one random patch per pair, `batch_size` patches per iteration. When
    /// images are smaller than the patch size, the patch shrinks to the
    /// largest multiple of 4 that fits the batch.
    pub fn run(&mut self, train: &[ImagePair], monitor: &ImagePair) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(DataError::Invalid("training set is empty".into()).into());
        }
        let mut sink = self.open_log()?;
        let mut log = Vec::new();
        while !self.done() {
            let epoch = self.epoch;
            let lr = lr_schedule(epoch, &self.cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(epoch as u64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng);
            let mut losses = Vec::new();
            for chunk in order.chunks(self.cfg.batch_size) {
                let fit = chunk
                    .iter()
                    .map(|&i| train[i].rainy.dims())
                    .map(|d| d.h.min(d.w))
                    .min()
                    .expect("non-empty chunk");
                let size = self.cfg.patch_size.min(fit) / SIZE_MULTIPLE * SIZE_MULTIPLE;
                if size == 0 {
                    return Err(DataError::Invalid(format!(
                        "images must be at least {SIZE_MULTIPLE} pixels on each side"
                    ))
                    .into());
                }
                let mut rainy = Vec::with_capacity(chunk.len());
                let mut clean = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let p = sample_patch(&train[i], size, &mut rng)?;
                    rainy.push(p.rainy);
                    clean.push(p.clean);
                }
                let (rainy, clean) = (Tensor::stack(&rainy)?, Tensor::stack(&clean)?);
                losses.push(self.step(&rainy, &clean, lr)?);
                if self.cfg.max_iterations.is_some_and(|m| self.iteration >= m) {
                    break;
                }
            }
            self.epoch += 1;
            let loss = losses.iter().sum::<f64>() / losses.len() as f64;
            let val_psnr = if self.epoch.is_multiple_of(self.cfg.val_every) || self.done() {
                self.monitor_psnr(monitor)?
            } else {
                f64::NAN
            };
            let row = LogRow {
                epoch,
                iter: self.iteration,
                lr,
                loss,
                val_psnr,
            };
            log::debug!("{}", row.to_csv());
            if let Some(f) = sink.as_mut() {
                writeln!(f, "{}", row.to_csv())?;
            }
            log.push(row);
            if let Some(dir) = &self.out_dir {
                if self.epoch.is_multiple_of(self.cfg.checkpoint_every) || self.done() {
                    let path = dir.join(CHECKPOINT_FILE);
                    self.save(&path)?;
                    log::info!("epoch {epoch}: checkpoint written to {}", path.display());
                }
            }
        }
        Ok(TrainReport {
            log,
            epochs: self.epoch,
            iterations: self.iteration,
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_adam(path: &Path, params: &ParameterStore<f32>) -> Result<AdamState<f32>, CheckpointError> {
    let (meta, store) = data::decode_container(&std::fs::read(path)?)?;
    let mut adam = AdamState::new(params);
    adam.t = meta.get_or("state.adam_t", 0)?;
    for (name, p) in params.iter() {
        for (prefix, dst) in [("m", &mut adam.m), ("v", &mut adam.v)] {
            let key = format!("{prefix}/{name}");
            let t = store.get(&key).ok_or_else(|| CheckpointError::Mismatch {
                name: key.clone(),
                detail: "missing from optimizer state".into(),
            })?;
            if t.dims() != p.dims() {
                return Err(CheckpointError::Mismatch {
                    name: key,
                    detail: format!("expected {}, found {}", p.dims(), t.dims()),
                });
            }
            dst.insert(name, t.clone());
        }
    }
    Ok(adam)
}
