//! Elementwise and layout operators with their gradient rules.

use super::{Dims, Tensor};
use crate::error::TensorError;
use crate::float::Float;

fn same_dims(op: &'static str, a: Dims, b: Dims) -> Result<(), TensorError> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::mismatch(op, a, b))
    }
}

pub fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Float>(x: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    x.zip_map(grad, |v, g| if v > T::zero() { g } else { T::zero() })
}

#[inline]
pub fn sigmoid_scalar<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of [`sigmoid`] expressed through its output `y`.
pub fn sigmoid_backward<T: Float>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    y.zip_map(grad, |s, g| g * s * (T::one() - s))
}

/// Spatial mean of every `(n, c)` plane; output is `n x c x 1 x 1`.
pub fn global_avg_pool<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let d = x.dims();
    if d.plane() == 0 {
        return Err(TensorError::EmptySpatial {
            op: "global_avg_pool",
            dims: d,
        });
    }
    let inv = T::lit(1.0 / d.plane() as f64);
    let data = x
        .data()
        .chunks_exact(d.plane())
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Ok(Tensor::from_parts(Dims::new(d.n, d.c, 1, 1), data))
}

pub fn global_avg_pool_backward<T: Float>(
    input: Dims,
    grad: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    same_dims("global_avg_pool_backward", Dims::new(input.n, input.c, 1, 1), grad.dims())?;
    let inv = T::lit(1.0 / input.plane() as f64);
    let mut data = Vec::with_capacity(input.numel());
    for &g in grad.data() {
        data.extend(std::iter::repeat_n(g * inv, input.plane()));
    }
    Ok(Tensor::from_parts(input, data))
}

/// Sub-pixel rearrangement: `out[n][c][h*r+i][w*r+j] = in[n][c*r*r+i*r+j][h][w]`.
pub fn pixel_shuffle<T: Float>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>, TensorError> {
    let d = x.dims();
    if r == 0 || !d.c.is_multiple_of(r * r) {
        return Err(TensorError::mismatch(
            "pixel_shuffle",
            format!("channels divisible by {}", r * r),
            d,
        ));
    }
    let out = Dims::new(d.n, d.c / (r * r), d.h * r, d.w * r);
    let src = x.data();
    let mut data = vec![T::zero(); out.numel()];
    for n in 0..out.n {
        for c in 0..out.c {
            for i in 0..r {
                for j in 0..r {
                    let ic = c * r * r + i * r + j;
                    for h in 0..d.h {
                        let row = &src[d.offset(n, ic, h, 0)..d.offset(n, ic, h, 0) + d.w];
                        let base = out.offset(n, c, h * r + i, 0);
                        for (w, &v) in row.iter().enumerate() {
                            data[base + w * r + j] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(out, data))
}

/// Inverse of [`pixel_shuffle`].
pub fn space_to_depth<T: Float>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>, TensorError> {
    let d = x.dims();
    if r == 0 || !d.h.is_multiple_of(r) || !d.w.is_multiple_of(r) {
        return Err(TensorError::mismatch(
            "space_to_depth",
            format!("spatial dims divisible by {r}"),
            d,
        ));
    }
    let out = Dims::new(d.n, d.c * r * r, d.h / r, d.w / r);
    let src = x.data();
    let mut data = vec![T::zero(); out.numel()];
    for n in 0..d.n {
        for c in 0..d.c {
            for i in 0..r {
                for j in 0..r {
                    let oc = c * r * r + i * r + j;
                    for h in 0..out.h {
                        let base = d.offset(n, c, h * r + i, 0);
                        let dst = out.offset(n, oc, h, 0);
                        for w in 0..out.w {
                            data[dst + w] = src[base + w * r + j];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(out, data))
}

pub fn add<T: Float>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_dims("add", x.dims(), y.dims())?;
    x.zip_map(y, |a, b| a + b)
}

pub fn sub<T: Float>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_dims("sub", x.dims(), y.dims())?;
    x.zip_map(y, |a, b| a - b)
}

pub fn scale<T: Float>(x: &Tensor<T>, k: T) -> Tensor<T> {
    x.map(|v| v * k)
}

/// Multiplies every `(n, c)` plane of `x` by `s[n][c]`; `s` is `n x c x 1 x 1`.
pub fn channel_scale<T: Float>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let d = x.dims();
    same_dims("channel_scale", Dims::new(d.n, d.c, 1, 1), s.dims())?;
    let mut data = Vec::with_capacity(d.numel());
    for (plane, &k) in x.data().chunks_exact(d.plane().max(1)).zip(s.data()) {
        data.extend(plane.iter().map(|&v| v * k));
    }
    Ok(Tensor::from_parts(d, data))
}

/// Returns `(d_x, d_s)` for [`channel_scale`].
pub fn channel_scale_backward<T: Float>(
    x: &Tensor<T>,
    s: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), TensorError> {
    same_dims("channel_scale_backward", x.dims(), grad.dims())?;
    let dx = channel_scale(grad, s)?;
    let p = x.dims().plane().max(1);
    let ds = x
        .data()
        .chunks_exact(p)
        .zip(grad.data().chunks_exact(p))
        .map(|(xs, gs)| xs.iter().zip(gs).map(|(&a, &b)| a * b).sum())
        .collect();
    Ok((dx, Tensor::from_parts(s.dims(), ds)))
}

/// Keeps the top-left `h x w` window of every plane.
pub fn crop<T: Float>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>, TensorError> {
    let d = x.dims();
    if h > d.h || w > d.w {
        return Err(TensorError::mismatch("crop", format!("window within {d}"), format!("{h}x{w}")));
    }
    let out = Dims::new(d.n, d.c, h, w);
    let mut data = Vec::with_capacity(out.numel());
    for n in 0..d.n {
        for c in 0..d.c {
            for row in 0..h {
                let s = d.offset(n, c, row, 0);
                data.extend_from_slice(&x.data()[s..s + w]);
            }
        }
    }
    Ok(Tensor::from_parts(out, data))
}

/// Gradient of [`crop`]: zero-extends back to `full`.
pub fn crop_backward<T: Float>(full: Dims, grad: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let g = grad.dims();
    if (g.n, g.c) != (full.n, full.c) || g.h > full.h || g.w > full.w {
        return Err(TensorError::mismatch("crop_backward", full, g));
    }
    let mut data = vec![T::zero(); full.numel()];
    for n in 0..g.n {
        for c in 0..g.c {
            for row in 0..g.h {
                let s = g.offset(n, c, row, 0);
                let t = full.offset(n, c, row, 0);
                data[t..t + g.w].copy_from_slice(&grad.data()[s..s + g.w]);
            }
        }
    }
    Ok(Tensor::from_parts(full, data))
}

/// Mirror index for reflect padding, valid for any overshoot.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

/// Reflect-pads `extra_h` rows at the bottom and `extra_w` columns at the right.
pub fn reflect_pad<T: Float>(x: &Tensor<T>, extra_h: usize, extra_w: usize) -> Result<Tensor<T>, TensorError> {
    let d = x.dims();
    if d.plane() == 0 {
        return Err(TensorError::EmptySpatial { op: "reflect_pad", dims: d });
    }
    let out = Dims::new(d.n, d.c, d.h + extra_h, d.w + extra_w);
    Ok(Tensor::from_fn(out, |n, c, h, w| {
        x.at(n, c, reflect(h, d.h), reflect(w, d.w))
    }))
}

/// Mean squared error with the one-half factor: `sum((a - b)^2) / (2 * numel)`.
pub fn mse<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T, TensorError> {
    same_dims("mse", pred.dims(), target.dims())?;
    let total: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(total / T::lit(2.0 * pred.numel().max(1) as f64))
}
