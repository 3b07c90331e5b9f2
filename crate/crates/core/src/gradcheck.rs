//! Finite-difference verification of every differentiable operator and of
//! the composed network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{finite_diff_check, relative_error, Eval, Graph, OpKind, Tape, Var};
use crate::error::{Result, TensorError};
use crate::model::{forward, loss_on_tape, param_specs, ModelConfig, ParamVars, ParameterStore};
use crate::tensor::{Dims, Tensor};

/// Pass threshold on the maximum relative error.
pub const THRESHOLD: f64 = 1e-4;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    /// Channel multiplier of the toy network (0.25 gives 16 base channels).
    pub channel_scale: f64,
    /// Side of the square toy input.
    pub size: usize,
    pub eps: f64,
    pub seed: u64,
    /// Elements probed per parameter tensor of the network.
    pub samples_per_tensor: usize,
    /// Deliberately wrong gradient rule, for negative controls.
    pub fault: Option<OpKind>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            channel_scale: 0.25,
            size: 16,
            eps: DEFAULT_EPS,
            seed: 0,
            samples_per_tensor: 3,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_error: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < THRESHOLD
    }
}

fn normal(rng: &mut ChaCha8Rng, dims: impl Into<Dims>, std: f64) -> Tensor<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    let dims = dims.into();
    let data = (0..dims.numel()).map(|_| dist.sample(rng)).collect();
    Tensor::new(dims, data).expect("length matches")
}

/// Moves every element at least `margin` away from zero.
fn away_from_zero(t: Tensor<f64>, margin: f64) -> Tensor<f64> {
    t.map(|v| if v.abs() < margin { margin.copysign(v) * 2.0 } else { v })
}

/// Runs every per-operator check, then the toy network check.
pub fn run(opts: &GradcheckOptions) -> Result<Vec<CheckRow>> {
    let mut rows = operator_checks(opts)?;
    rows.push(CheckRow {
        name: format!("rsen (1x3x{0}x{0})", opts.size),
        max_rel_error: network_check(opts, opts.size, opts.size)?,
    });
    // Odd spatial size exercises the pad/crop path.
    let odd = opts.size.saturating_sub(3).max(5);
    rows.push(CheckRow {
        name: format!("rsen (1x3x{}x{})", odd, odd + 2),
        max_rel_error: network_check(opts, odd, odd + 2)?,
    });
    Ok(rows)
}

type Builder = Box<dyn Fn(&Tape<f64>, Var) -> Result<Var, TensorError>>;

pub fn operator_checks(opts: &GradcheckOptions) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = opts.eps;
    let fault = opts.fault;
    let mut rows = Vec::new();
    let mut check = |name: &str, leaf: Tensor<f64>, f: Builder| -> Result<()> {
        let err = finite_diff_check(
            |g, x| {
                g.inject_fault(fault);
                f(g, x)
            },
            &leaf,
            eps,
        )?;
        rows.push(CheckRow {
            name: name.to_string(),
            max_rel_error: err,
        });
        Ok(())
    };

    // Each probe ends in an MSE against a fixed random target so the
    // upstream gradient is non-trivial.
    let x = normal(&mut rng, [2, 3, 5, 6], 1.0);
    for stride in [1usize, 2] {
        let w = normal(&mut rng, [4, 3, 3, 3], 0.3);
        let b = normal(&mut rng, [1, 4, 1, 1], 0.1);
        let ho = 5usize.div_ceil(stride);
        let wo = 6usize.div_ceil(stride);
        let target = normal(&mut rng, [2, 4, ho, wo], 1.0);
        let (wc, bc, tc) = (w.clone(), b.clone(), target.clone());
        check(
            &format!("conv2d/input (stride {stride})"),
            x.clone(),
            Box::new(move |g, x| {
                let (w, b, t) = (g.leaf(wc.clone()), g.leaf(bc.clone()), g.leaf(tc.clone()));
                let y = g.conv2d(&x, &w, &b, stride)?;
                g.mse_loss(&y, &t)
            }),
        )?;
        let (xc, bc, tc) = (x.clone(), b.clone(), target.clone());
        check(
            &format!("conv2d/weight (stride {stride})"),
            w.clone(),
            Box::new(move |g, w| {
                let (x, b, t) = (g.leaf(xc.clone()), g.leaf(bc.clone()), g.leaf(tc.clone()));
                let y = g.conv2d(&x, &w, &b, stride)?;
                g.mse_loss(&y, &t)
            }),
        )?;
        let (xc, wc, tc) = (x.clone(), w.clone(), target);
        check(
            &format!("conv2d/bias (stride {stride})"),
            b,
            Box::new(move |g, b| {
                let (x, w, t) = (g.leaf(xc.clone()), g.leaf(wc.clone()), g.leaf(tc.clone()));
                let y = g.conv2d(&x, &w, &b, stride)?;
                g.mse_loss(&y, &t)
            }),
        )?;
    }

    let target = normal(&mut rng, [2, 3, 5, 6], 1.0);
    let relu_in = away_from_zero(normal(&mut rng, [2, 3, 5, 6], 1.0), 10.0 * eps);
    let tc = target.clone();
    check(
        "relu",
        relu_in,
        Box::new(move |g, x| {
            let t = g.leaf(tc.clone());
            let y = g.relu(&x);
            g.mse_loss(&y, &t)
        }),
    )?;
    let tc = target.clone();
    check(
        "sigmoid",
        normal(&mut rng, [2, 3, 5, 6], 2.0),
        Box::new(move |g, x| {
            let t = g.leaf(tc.clone());
            let y = g.sigmoid(&x);
            g.mse_loss(&y, &t)
        }),
    )?;
    let pooled_target = normal(&mut rng, [2, 3, 1, 1], 1.0);
    check(
        "global_avg_pool",
        normal(&mut rng, [2, 3, 5, 6], 1.0),
        Box::new(move |g, x| {
            let t = g.leaf(pooled_target.clone());
            let y = g.global_avg_pool(&x)?;
            g.mse_loss(&y, &t)
        }),
    )?;
    let shuffled_target = normal(&mut rng, [1, 2, 6, 4], 1.0);
    check(
        "pixel_shuffle",
        normal(&mut rng, [1, 8, 3, 2], 1.0),
        Box::new(move |g, x| {
            let t = g.leaf(shuffled_target.clone());
            let y = g.pixel_shuffle(&x, 2)?;
            g.mse_loss(&y, &t)
        }),
    )?;
    let s2d_target = normal(&mut rng, [1, 8, 3, 2], 1.0);
    check(
        "space_to_depth",
        normal(&mut rng, [1, 2, 6, 4], 1.0),
        Box::new(move |g, x| {
            let t = g.leaf(s2d_target.clone());
            let y = g.space_to_depth(&x, 2)?;
            g.mse_loss(&y, &t)
        }),
    )?;
    let other = normal(&mut rng, [2, 3, 5, 6], 1.0);
    for (name, is_add) in [("add", true), ("sub", false)] {
        let (oc, tc) = (other.clone(), target.clone());
        check(
            name,
            normal(&mut rng, [2, 3, 5, 6], 1.0),
            Box::new(move |g, x| {
                let (o, t) = (g.leaf(oc.clone()), g.leaf(tc.clone()));
                // Use x on both sides so both operand rules are exercised.
                let y = if is_add { g.add(&o, &x)? } else { g.sub(&o, &x)? };
                let y = if is_add { g.add(&y, &x)? } else { g.sub(&x, &y)? };
                g.mse_loss(&y, &t)
            }),
        )?;
    }
    let gate = normal(&mut rng, [2, 3, 1, 1], 1.0);
    let scaled = normal(&mut rng, [2, 3, 5, 6], 1.0);
    let (gc, tc) = (gate.clone(), target.clone());
    check(
        "channel_scale/input",
        scaled.clone(),
        Box::new(move |g, x| {
            let (s, t) = (g.leaf(gc.clone()), g.leaf(tc.clone()));
            let y = g.channel_scale(&x, &s)?;
            g.mse_loss(&y, &t)
        }),
    )?;
    let tc = target.clone();
    check(
        "channel_scale/scale",
        gate,
        Box::new(move |g, s| {
            let (x, t) = (g.leaf(scaled.clone()), g.leaf(tc.clone()));
            let y = g.channel_scale(&x, &s)?;
            g.mse_loss(&y, &t)
        }),
    )?;
    let crop_target = normal(&mut rng, [2, 3, 3, 4], 1.0);
    check(
        "crop",
        normal(&mut rng, [2, 3, 5, 6], 1.0),
        Box::new(move |g, x| {
            let t = g.leaf(crop_target.clone());
            let y = g.crop(&x, 3, 4)?;
            g.mse_loss(&y, &t)
        }),
    )?;
    let pred = normal(&mut rng, [2, 3, 4, 4], 1.0);
    let truth = normal(&mut rng, [2, 3, 4, 4], 1.0);
    let tr = truth.clone();
    check(
        "mse_loss/prediction",
        pred.clone(),
        Box::new(move |g, p| {
            let t = g.leaf(tr.clone());
            g.mse_loss(&p, &t)
        }),
    )?;
    check(
        "mse_loss/target",
        truth,
        Box::new(move |g, t| {
            let p = g.leaf(pred.clone());
            g.mse_loss(&p, &t)
        }),
    )?;
    let weights = normal(&mut rng, [2, 3, 5, 6], 1.0);
    check(
        "sum",
        normal(&mut rng, [2, 3, 5, 6], 1.0),
        Box::new(move |g, x| {
            let w = g.leaf(weights.clone());
            let y = g.channel_scale(&x, &g.leaf(Tensor::ones([2, 3, 1, 1])))?;
            let y = g.add(&y, &w)?;
            let y = g.sigmoid(&y);
            Ok(g.sum(&y))
        }),
    )?;
    Ok(rows)
}

/// Random toy network parameters: every tensor drawn from N(0, 0.1).
pub fn random_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterStore<f64> {
    let mut store = ParameterStore::new();
    for spec in param_specs(cfg) {
        let t = normal(rng, spec.dims, 0.1);
        store.insert(spec.name, t);
    }
    store
}

/// Max relative error over sampled parameter elements of the full network.
///
/// Elements whose `+eps` / `-eps` evaluations change any ReLU activation
/// pattern straddle a kink and are re-sampled.
pub fn network_check(opts: &GradcheckOptions, h: usize, w: usize) -> Result<f64> {
    let cfg = ModelConfig {
        channel_scale: opts.channel_scale,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let store = random_params(&cfg, &mut rng);
    let rainy = Tensor::from_fn([1, 3, h, w], |_, _, _, _| rng.random_range(0.0..1.0));
    let clean = Tensor::from_fn([1, 3, h, w], |_, _, _, _| rng.random_range(0.0..1.0));

    let tape = Tape::new();
    tape.inject_fault(opts.fault);
    let (loss, vars) = loss_on_tape(&tape, &store, &cfg, &rainy, &clean)?;
    let grads = tape.backward(loss)?;

    let eval = |s: &ParameterStore<f64>| -> Result<(f64, u64)> {
        let g = Eval::recording();
        let p = ParamVars::new(&g, s);
        let out = forward(&g, &p, &cfg, &rainy)?;
        let l = crate::tensor::mse(&out.derained, &clean)?;
        Ok((l, g.relu_pattern()))
    };
    let (_, base_pattern) = eval(&store)?;

    let mut worst = 0.0f64;
    for (name, var) in vars.iter() {
        let analytic = grads.wrt(*var);
        let n = analytic.numel();
        let mut accepted = 0;
        let mut tries = 0;
        while accepted < opts.samples_per_tensor.min(n) && tries < 20 * opts.samples_per_tensor {
            tries += 1;
            let i = rng.random_range(0..n);
            let mut plus = store.clone();
            plus.get_mut(name).expect("present").data_mut()[i] += opts.eps;
            let mut minus = store.clone();
            minus.get_mut(name).expect("present").data_mut()[i] -= opts.eps;
            let (fp, pp) = eval(&plus)?;
            let (fm, pm) = eval(&minus)?;
            if pp != base_pattern || pm != base_pattern {
                continue;
            }
            accepted += 1;
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let err = relative_error(analytic.data()[i], numeric);
            log::debug!("{name}[{i}] analytic={} numeric={numeric} err={err}", analytic.data()[i]);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
