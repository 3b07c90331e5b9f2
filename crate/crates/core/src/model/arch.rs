//! Layer inventory: block list, parameter names and shapes, and counts.

use super::config::ModelConfig;
use crate::tensor::Dims;

pub const IMAGE_CHANNELS: usize = 3;
pub const KERNEL: usize = 3;
/// Pixel-shuffle factor of the decoder upsampling.
pub const UPSCALE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// 3x3 conv from the image to the base width, then an RSEBlock.
    InBlock,
    /// Stride-2 3x3 conv doubling channels, then an RSEBlock.
    EBlock,
    /// One RSEBlock of the bottleneck.
    Bottleneck,
    /// RSEBlock, point-wise expansion and pixel shuffle halving channels.
    DBlock,
    /// RSEBlock, then 3x3 conv back to image channels.
    OutBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_ch: usize,
    pub out_ch: usize,
}

/// Blocks in execution order.
pub fn block_specs(cfg: &ModelConfig) -> Vec<BlockSpec> {
    let c = cfg.width();
    let b = |kind, in_ch, out_ch| BlockSpec { kind, in_ch, out_ch };
    let mut v = vec![
        b(BlockKind::InBlock, IMAGE_CHANNELS, c),
        b(BlockKind::EBlock, c, 2 * c),
        b(BlockKind::EBlock, 2 * c, 4 * c),
    ];
    v.extend((0..cfg.bottleneck_blocks).map(|_| b(BlockKind::Bottleneck, 4 * c, 4 * c)));
    v.push(b(BlockKind::DBlock, 4 * c, 2 * c));
    v.push(b(BlockKind::DBlock, 2 * c, c));
    v.push(b(BlockKind::OutBlock, c, IMAGE_CHANNELS));
    v
}

impl BlockSpec {
    /// Closed-form parameter count of this block under `cfg`.
    pub fn param_count(&self, cfg: &ModelConfig) -> usize {
        let conv = |k: usize, i: usize, o: usize| k * k * i * o + o;
        let se = |ch: usize| {
            if cfg.use_se {
                conv(1, ch, cfg.se_squeeze) + conv(1, cfg.se_squeeze, ch)
            } else {
                0
            }
        };
        let rse = |ch: usize| 2 * conv(KERNEL, ch, ch) + se(ch);
        let (i, o) = (self.in_ch, self.out_ch);
        match self.kind {
            BlockKind::InBlock | BlockKind::EBlock => conv(KERNEL, i, o) + rse(o),
            BlockKind::Bottleneck => rse(i),
            BlockKind::DBlock => {
                let skip = if cfg.use_skip { conv(1, o, o) } else { 0 };
                rse(i) + conv(1, i, o * UPSCALE * UPSCALE) + skip
            }
            BlockKind::OutBlock => rse(i) + conv(KERNEL, i, o),
        }
    }
}

/// Total learnable scalars, summed block by block.
pub fn param_count(cfg: &ModelConfig) -> usize {
    block_specs(cfg).iter().map(|b| b.param_count(cfg)).sum()
}

/// Name and shape of one learnable tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Dims,
    /// Kernel fan-in and fan-out, used by the initializer; zero for biases.
    pub fan_in: usize,
    pub fan_out: usize,
}

impl ParamSpec {
    pub fn is_bias(&self) -> bool {
        self.name.ends_with("/bias")
    }
}

pub(crate) fn conv_specs(out: &mut Vec<ParamSpec>, prefix: &str, k: usize, i: usize, o: usize) {
    out.push(ParamSpec {
        name: format!("{prefix}/weight"),
        dims: Dims::new(o, i, k, k),
        fan_in: i * k * k,
        fan_out: o * k * k,
    });
    out.push(ParamSpec {
        name: format!("{prefix}/bias"),
        dims: Dims::new(1, o, 1, 1),
        fan_in: 0,
        fan_out: 0,
    });
}

fn rse_specs(out: &mut Vec<ParamSpec>, prefix: &str, ch: usize, cfg: &ModelConfig) {
    conv_specs(out, &format!("{prefix}/conv1"), KERNEL, ch, ch);
    conv_specs(out, &format!("{prefix}/conv2"), KERNEL, ch, ch);
    if cfg.use_se {
        conv_specs(out, &format!("{prefix}/se/fc1"), 1, ch, cfg.se_squeeze);
        conv_specs(out, &format!("{prefix}/se/fc2"), 1, cfg.se_squeeze, ch);
    }
}

/// Every learnable tensor of the network, grouped as `encoder/*`,
/// `bottleneck/*` and `decoder/*`.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let c = cfg.width();
    let mut v = Vec::new();
    conv_specs(&mut v, "encoder/in/conv", KERNEL, IMAGE_CHANNELS, c);
    rse_specs(&mut v, "encoder/in/rse", c, cfg);
    for (level, ch) in [(1, c), (2, 2 * c)] {
        conv_specs(&mut v, &format!("encoder/down{level}/conv"), KERNEL, ch, 2 * ch);
        rse_specs(&mut v, &format!("encoder/down{level}/rse"), 2 * ch, cfg);
    }
    for i in 0..cfg.bottleneck_blocks {
        rse_specs(&mut v, &format!("bottleneck/rse{i}"), 4 * c, cfg);
    }
    for (level, ch) in [(1, 4 * c), (2, 2 * c)] {
        let half = ch / 2;
        rse_specs(&mut v, &format!("decoder/up{level}/rse"), ch, cfg);
        conv_specs(&mut v, &format!("decoder/up{level}/expand"), 1, ch, half * UPSCALE * UPSCALE);
        if cfg.use_skip {
            conv_specs(&mut v, &format!("decoder/up{level}/skip"), 1, half, half);
        }
    }
    rse_specs(&mut v, "decoder/out/rse", c, cfg);
    conv_specs(&mut v, "decoder/out/conv", KERNEL, c, IMAGE_CHANNELS);
    v
}
