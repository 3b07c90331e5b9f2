use std::fmt;
use std::path::PathBuf;

use crate::config::KvConfig;
use crate::error::ConfigError;
use crate::model::SIZE_MULTIPLE;

/// Optimization and bookkeeping settings for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    /// Total epochs, counted from the start of the run (resumed runs included).
    pub epochs: usize,
    pub lr0: f64,
    pub lr_halve_every: usize,
    pub seed: u64,
    /// Optional cap on total iterations, checked after every step.
    pub max_iterations: Option<usize>,
    /// Write a checkpoint every this many epochs (and always at the end).
    pub checkpoint_every: usize,
    /// Score the monitoring pair every this many epochs.
    pub val_every: usize,
    pub data_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            patch_size: 256,
            epochs: 700,
            lr0: 1e-4,
            lr_halve_every: 150,
            seed: 0,
            max_iterations: None,
            checkpoint_every: 50,
            val_every: 1,
            data_dir: None,
            val_dir: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("train.batch_size", self.batch_size),
            ("train.patch_size", self.patch_size),
            ("train.epochs", self.epochs),
            ("train.lr_halve_every", self.lr_halve_every),
            ("train.checkpoint_every", self.checkpoint_every),
            ("train.val_every", self.val_every),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(ConfigError::InvalidValue {
                    key: key.into(),
                    value: "0".into(),
                    reason: "must be positive".into(),
                });
            }
        }
        if !self.patch_size.is_multiple_of(SIZE_MULTIPLE) {
            return Err(ConfigError::InvalidValue {
                key: "train.patch_size".into(),
                value: self.patch_size.to_string(),
                reason: format!("must be divisible by {SIZE_MULTIPLE}"),
            });
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(ConfigError::InvalidValue {
                key: "train.lr".into(),
                value: self.lr0.to_string(),
                reason: "must be positive".into(),
            });
        }
        if self.max_iterations == Some(0) {
            return Err(ConfigError::InvalidValue {
                key: "train.iterations".into(),
                value: "0".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Reads `train.*` keys, defaulting absent ones.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let d = TrainConfig::default();
        let path = |key: &str| kv.raw(key).map(PathBuf::from);
        let cfg = TrainConfig {
            batch_size: kv.get_or("train.batch_size", d.batch_size)?,
            patch_size: kv.get_or("train.patch_size", d.patch_size)?,
            epochs: kv.get_or("train.epochs", d.epochs)?,
            lr0: kv.get_or("train.lr", d.lr0)?,
            lr_halve_every: kv.get_or("train.lr_halve_every", d.lr_halve_every)?,
            seed: kv.get_or("train.seed", d.seed)?,
            max_iterations: kv.get("train.iterations")?,
            checkpoint_every: kv.get_or("train.checkpoint_every", d.checkpoint_every)?,
            val_every: kv.get_or("train.val_every", d.val_every)?,
            data_dir: path("train.data_dir"),
            val_dir: path("train.val_dir"),
            out_dir: path("train.out_dir"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_kv(&self, kv: &mut KvConfig) {
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.patch_size", self.patch_size);
        kv.set("train.epochs", self.epochs);
        kv.set("train.lr", self.lr0);
        kv.set("train.lr_halve_every", self.lr_halve_every);
        kv.set("train.seed", self.seed);
        if let Some(n) = self.max_iterations {
            kv.set("train.iterations", n);
        }
        kv.set("train.checkpoint_every", self.checkpoint_every);
        kv.set("train.val_every", self.val_every);
        for (key, p) in [
            ("train.data_dir", &self.data_dir),
            ("train.val_dir", &self.val_dir),
            ("train.out_dir", &self.out_dir),
        ] {
            if let Some(p) = p {
                kv.set(key, p.display());
            }
        }
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut kv = KvConfig::default();
        self.write_kv(&mut kv);
        f.write_str(&kv.to_text())
    }
}

/// `lr0 * 0.5^floor(epoch / lr_halve_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = epoch / cfg.lr_halve_every.max(1);
    cfg.lr0 * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}
