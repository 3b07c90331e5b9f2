use std::fmt;

use crate::config::{parse_ratio, KvConfig};
use crate::error::ConfigError;

/// Architecture hyperparameters and ablation toggles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Width of the first feature map at `channel_scale = 1`.
    pub base_channels: usize,
    /// Encoder/decoder depth; only 2 is supported.
    pub levels: usize,
    pub bottleneck_blocks: usize,
    /// Hidden width of every squeeze-and-excitation block.
    pub se_squeeze: usize,
    pub use_skip: bool,
    pub use_res: bool,
    pub use_se: bool,
    /// Multiplier on `base_channels` for reduced-size runs.
    pub channel_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 64,
            levels: 2,
            bottleneck_blocks: 3,
            se_squeeze: 6,
            use_skip: true,
            use_res: true,
            use_se: true,
            channel_scale: 1.0,
        }
    }
}

/// The four points of the Skip / RES / SE ablation lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    CoarseNet,
    Skip,
    SkipRes,
    SkipResSe,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::CoarseNet,
        Ablation::Skip,
        Ablation::SkipRes,
        Ablation::SkipResSe,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::CoarseNet => "CoarseNet",
            Ablation::Skip => "CoarseNet + Skip",
            Ablation::SkipRes => "CoarseNet + Skip + RES",
            Ablation::SkipResSe => "CoarseNet + Skip + RES + SE",
        }
    }
}

impl ModelConfig {
    /// Channel-reduced configuration (16 base channels) for CPU-scale runs.
    pub fn desk() -> Self {
        ModelConfig {
            channel_scale: 0.25,
            ..Default::default()
        }
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        let (skip, res, se) = match a {
            Ablation::CoarseNet => (false, false, false),
            Ablation::Skip => (true, false, false),
            Ablation::SkipRes => (true, true, false),
            Ablation::SkipResSe => (true, true, true),
        };
        self.use_skip = skip;
        self.use_res = res;
        self.use_se = se;
        self
    }

    /// Effective width of the first level.
    pub fn width(&self) -> usize {
        (self.base_channels as f64 * self.channel_scale).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.levels != 2 {
            return Err(ConfigError::Invalid(format!(
                "levels must be 2, got {}",
                self.levels
            )));
        }
        if !(self.channel_scale.is_finite() && self.channel_scale > 0.0) {
            return Err(ConfigError::Invalid("channel_scale must be positive".into()));
        }
        let scaled = self.base_channels as f64 * self.channel_scale;
        if (scaled - scaled.round()).abs() > 1e-9 || scaled.round() < 1.0 {
            return Err(ConfigError::Invalid(format!(
                "base_channels * channel_scale = {scaled} is not a positive integer"
            )));
        }
        if self.use_se && (self.se_squeeze == 0 || self.width() < self.se_squeeze) {
            return Err(ConfigError::Invalid(format!(
                "squeeze-and-excitation needs width >= se_squeeze ({} < {})",
                self.width(),
                self.se_squeeze
            )));
        }
        Ok(())
    }

    /// Reads `model.*` keys, defaulting absent ones.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let d = ModelConfig::default();
        let scale = match kv.raw("model.channel_scale") {
            None => d.channel_scale,
            Some(s) => parse_ratio(s).map_err(|reason| ConfigError::InvalidValue {
                key: "model.channel_scale".into(),
                value: s.into(),
                reason,
            })?,
        };
        let cfg = ModelConfig {
            base_channels: kv.get_or("model.base_channels", d.base_channels)?,
            levels: kv.get_or("model.levels", d.levels)?,
            bottleneck_blocks: kv.get_or("model.bottleneck_blocks", d.bottleneck_blocks)?,
            se_squeeze: kv.get_or("model.se_squeeze", d.se_squeeze)?,
            use_skip: kv.get_or("model.use_skip", d.use_skip)?,
            use_res: kv.get_or("model.use_res", d.use_res)?,
            use_se: kv.get_or("model.use_se", d.use_se)?,
            channel_scale: scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_kv(&self, kv: &mut KvConfig) {
        kv.set("model.base_channels", self.base_channels);
        kv.set("model.levels", self.levels);
        kv.set("model.bottleneck_blocks", self.bottleneck_blocks);
        kv.set("model.se_squeeze", self.se_squeeze);
        kv.set("model.use_skip", self.use_skip);
        kv.set("model.use_res", self.use_res);
        kv.set("model.use_se", self.use_se);
        kv.set("model.channel_scale", self.channel_scale);
    }

    pub fn to_kv_text(&self) -> String {
        let mut kv = KvConfig::default();
        self.write_kv(&mut kv);
        kv.to_text()
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "width={} bottleneck={} se_squeeze={} skip={} res={} se={}",
            self.width(),
            self.bottleneck_blocks,
            self.se_squeeze,
            self.use_skip,
            self.use_res,
            self.use_se
        )
    }
}
