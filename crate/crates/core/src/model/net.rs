//! Forward pass of the residual squeeze-and-excitation encoder-decoder.

use std::collections::BTreeMap;

use super::arch::UPSCALE;
use super::config::ModelConfig;
use super::params::ParameterStore;
use crate::autodiff::{Eval, Graph, Tape, Var};
use crate::error::{Error, Result, TensorError};
use crate::float::Float;
use crate::tensor::{self, Tensor};

/// Spatial multiple the network needs: two stride-2 levels.
pub const SIZE_MULTIPLE: usize = 4;

/// Graph handles for every parameter of a store.
pub struct ParamVars<V> {
    vars: BTreeMap<String, V>,
}

impl<V: Clone> ParamVars<V> {
    pub fn new<T: Float, G: Graph<T, Var = V>>(g: &G, store: &ParameterStore<T>) -> Self {
        ParamVars {
            vars: store
                .iter()
                .map(|(k, t)| (k.to_string(), g.input(t.clone())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&V, TensorError> {
        self.vars
            .get(name)
            .ok_or_else(|| TensorError::Contract(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &V)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Network outputs: the estimated rain layer and the derained image.
#[derive(Debug, Clone)]
pub struct Prediction<V> {
    pub streaks: V,
    pub derained: V,
}

struct Net<'a, T: Float, G: Graph<T>> {
    g: &'a G,
    p: &'a ParamVars<G::Var>,
    cfg: &'a ModelConfig,
}

impl<T: Float, G: Graph<T>> Net<'_, T, G> {
    fn conv(&self, prefix: &str, x: &G::Var, stride: usize) -> Result<G::Var, TensorError> {
        let w = self.p.get(&format!("{prefix}/weight"))?;
        let b = self.p.get(&format!("{prefix}/bias"))?;
        self.g.conv2d(x, w, b, stride)
    }

    fn se(&self, prefix: &str, x: &G::Var) -> Result<G::Var, TensorError> {
        se_block(self.g, self.p, prefix, x)
    }

    fn rse(&self, prefix: &str, x: &G::Var) -> Result<G::Var, TensorError> {
        let h = self.conv(&format!("{prefix}/conv1"), x, 1)?;
        let h = self.g.relu(&h);
        let mut y = self.conv(&format!("{prefix}/conv2"), &h, 1)?;
        if self.cfg.use_res {
            y = self.g.add(&y, x)?;
        }
        if self.cfg.use_se {
            y = self.se(&format!("{prefix}/se"), &y)?;
        }
        Ok(y)
    }

    /// Conv followed by ReLU.
    fn conv_relu(&self, prefix: &str, x: &G::Var, stride: usize) -> Result<G::Var, TensorError> {
        let y = self.conv(prefix, x, stride)?;
        Ok(self.g.relu(&y))
    }

    fn up(&self, level: usize, x: &G::Var, skip: &G::Var) -> Result<G::Var, TensorError> {
        let prefix = format!("decoder/up{level}");
        let y = self.rse(&format!("{prefix}/rse"), x)?;
        let y = self.conv_relu(&format!("{prefix}/expand"), &y, 1)?;
        let mut y = self.g.pixel_shuffle(&y, UPSCALE)?;
        if self.cfg.use_skip {
            let s = self.conv(&format!("{prefix}/skip"), skip, 1)?;
            y = self.g.add(&y, &s)?;
        }
        Ok(y)
    }

    /// Rain-layer estimate for an input whose sides are multiples of 4.
    fn streaks(&self, image: &G::Var) -> Result<G::Var, TensorError> {
        let f0 = self.conv_relu("encoder/in/conv", image, 1)?;
        let f0 = self.rse("encoder/in/rse", &f0)?;
        let f1 = self.conv_relu("encoder/down1/conv", &f0, 2)?;
        let f1 = self.rse("encoder/down1/rse", &f1)?;
        let f2 = self.conv_relu("encoder/down2/conv", &f1, 2)?;
        let mut h = self.rse("encoder/down2/rse", &f2)?;
        for i in 0..self.cfg.bottleneck_blocks {
            h = self.rse(&format!("bottleneck/rse{i}"), &h)?;
        }
        let d1 = self.up(1, &h, &f1)?;
        let d0 = self.up(2, &d1, &f0)?;
        let r = self.rse("decoder/out/rse", &d0)?;
        self.conv("decoder/out/conv", &r, 1)
    }
}

/// Squeeze-and-excitation: `x * sigmoid(fc2(relu(fc1(gap(x)))))` per channel.
pub fn se_block<T: Float, G: Graph<T>>(
    g: &G,
    p: &ParamVars<G::Var>,
    prefix: &str,
    x: &G::Var,
) -> Result<G::Var, TensorError> {
    let fc = |name: &str, v: &G::Var| {
        g.conv2d(
            v,
            p.get(&format!("{prefix}/{name}/weight"))?,
            p.get(&format!("{prefix}/{name}/bias"))?,
            1,
        )
    };
    let s = g.global_avg_pool(x)?;
    let s = fc("fc1", &s)?;
    let s = g.relu(&s);
    let s = fc("fc2", &s)?;
    let s = g.sigmoid(&s);
    g.channel_scale(x, &s)
}

/// Residual squeeze-and-excitation block: `conv3x3 -> ReLU -> conv3x3`,
/// plus the input when `use_res`, then SE when `use_se`.
pub fn rse_block<T: Float, G: Graph<T>>(
    g: &G,
    p: &ParamVars<G::Var>,
    cfg: &ModelConfig,
    prefix: &str,
    x: &G::Var,
) -> Result<G::Var, TensorError> {
    Net { g, p, cfg }.rse(prefix, x)
}

fn padding(len: usize) -> usize {
    (SIZE_MULTIPLE - len % SIZE_MULTIPLE) % SIZE_MULTIPLE
}

/// Runs the network on `image` (`n x 3 x h x w`, values in `[0, 1]`).
///
/// Inputs whose sides are not multiples of 4 are reflect-padded on the
/// bottom/right and the rain estimate is cropped back, so both outputs have
/// the input's dims. `derained = image - streaks`.
pub fn forward<T: Float, G: Graph<T>>(
    g: &G,
    params: &ParamVars<G::Var>,
    cfg: &ModelConfig,
    image: &Tensor<T>,
) -> Result<Prediction<G::Var>, TensorError> {
    let d = image.dims();
    if d.c != super::arch::IMAGE_CHANNELS {
        return Err(TensorError::mismatch("forward", "3 image channels", d));
    }
    let (ph, pw) = (padding(d.h), padding(d.w));
    let input = g.input(image.clone());
    let streaks = if ph == 0 && pw == 0 {
        Net { g, p: params, cfg }.streaks(&input)?
    } else {
        let padded = g.input(tensor::reflect_pad(image, ph, pw)?);
        let r = Net { g, p: params, cfg }.streaks(&padded)?;
        g.crop(&r, d.h, d.w)?
    };
    let derained = g.sub(&input, &streaks)?;
    Ok(Prediction { streaks, derained })
}

/// Scalar training loss on a tape, returned with the parameter handles.
pub fn loss_on_tape<T: Float>(
    tape: &Tape<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    rainy: &Tensor<T>,
    clean: &Tensor<T>,
) -> Result<(Var, ParamVars<Var>), TensorError> {
    let params = ParamVars::new(tape, store);
    let pred = forward(tape, &params, cfg, rainy)?;
    let target = tape.input(clean.clone());
    let loss = tape.mse_loss(&pred.derained, &target)?;
    Ok((loss, params))
}

/// A configured network with loaded weights; immutable and shareable
/// across threads for inference.
#[derive(Debug, Clone)]
pub struct RsenModel<T: Float = f32> {
    cfg: ModelConfig,
    params: ParameterStore<T>,
}

impl<T: Float> RsenModel<T> {
    pub fn new(cfg: ModelConfig, params: ParameterStore<T>) -> Result<Self> {
        cfg.validate()?;
        params.validate(&cfg).map_err(Error::from)?;
        Ok(RsenModel { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn into_params(self) -> ParameterStore<T> {
        self.params
    }

    /// Returns `(streaks, derained)`.
    pub fn derain(&self, image: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), TensorError> {
        let g = Eval::new();
        let params = ParamVars::new(&g, &self.params);
        let out = forward(&g, &params, &self.cfg, image)?;
        Ok((out.streaks, out.derained))
    }
}
