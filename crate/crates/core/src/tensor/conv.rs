//! 2-D convolution (cross-correlation) via blocked im2col + GEMM.
//!
//! Output positions are split into fixed blocks of `BLOCK` columns, so the
//! work partition, and therefore the floating-point summation order, does
//! not depend on the thread count.

use super::{Dims, Tensor};
use crate::error::TensorError;
use crate::float::{gemm, Float};
use crate::parallel;

const BLOCK: usize = 512;

/// Weights `(out_ch, in_ch, k, k)`, bias `(1, out_ch, 1, 1)` and stride.
/// Padding is always `k / 2` zeros on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Float> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Float> ConvParams<T> {
    pub fn in_channels(&self) -> usize {
        self.weight.dims().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims().n
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims().h
    }

    pub fn padding(&self) -> usize {
        self.kernel() / 2
    }
}

pub fn conv2d<T: Float>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>, TensorError> {
    conv2d_raw(x, &p.weight, &p.bias, p.stride)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    input: Dims,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(x: Dims, w: Dims, stride: usize) -> Result<Self, TensorError> {
        if w.h != w.w || w.h.is_multiple_of(2) {
            return Err(TensorError::mismatch("conv2d", "square odd kernel", w));
        }
        if x.c != w.c {
            return Err(TensorError::mismatch(
                "conv2d",
                format!("{} input channels", w.c),
                x,
            ));
        }
        if x.h == 0 || x.w == 0 {
            return Err(TensorError::EmptySpatial { op: "conv2d", dims: x });
        }
        if stride == 0 {
            return Err(TensorError::Contract("conv2d stride must be positive".into()));
        }
        let k = w.h;
        let pad = k / 2;
        Ok(Geometry {
            input: x,
            cout: w.n,
            k,
            stride,
            pad,
            ho: (x.h + 2 * pad - k) / stride + 1,
            wo: (x.w + 2 * pad - k) / stride + 1,
        })
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    fn patch(&self) -> usize {
        self.input.c * self.k * self.k
    }

    fn blocks(&self) -> usize {
        self.positions().div_ceil(BLOCK)
    }

    fn block_range(&self, b: usize) -> (usize, usize) {
        let p0 = b * BLOCK;
        (p0, BLOCK.min(self.positions() - p0))
    }

    /// Point-wise stride-1 convolutions read the input directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn output(&self) -> Dims {
        Dims::new(self.input.n, self.cout, self.ho, self.wo)
    }

    /// Calls `f(row, col_offset, seg_len, iy, ix0)` for each output-row
    /// segment of the block `p0..p0+len`, where `iy`/`ix0` are the (possibly
    /// out-of-range) input coordinates of the segment's first tap.
    #[inline]
    fn segments(&self, p0: usize, len: usize, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, isize, isize)) {
        let mut pos = p0;
        let end = p0 + len;
        while pos < end {
            let (oy, ox) = (pos / self.wo, pos % self.wo);
            let seg = (self.wo - ox).min(end - pos);
            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
            let ix0 = (ox * self.stride + kx) as isize - self.pad as isize;
            f(pos - p0, seg, iy, ix0);
            pos += seg;
        }
    }

    /// Range of `t` in `0..seg` with `0 <= ix0 + t*s < w`.
    #[inline]
    fn valid(ix0: isize, s: usize, seg: usize, w: usize) -> (usize, usize) {
        let s = s as isize;
        let lo = if ix0 >= 0 { 0 } else { ((-ix0 + s - 1) / s) as usize };
        let hi = if ix0 >= w as isize { 0 } else { ((w as isize - ix0 + s - 1) / s) as usize };
        (lo.min(seg), hi.min(seg).max(lo.min(seg)))
    }

    /// Fills `cols` (`patch x len`, row-major) for output positions `p0..p0+len`.
    fn im2col<T: Float>(&self, img: &[T], p0: usize, len: usize, cols: &mut [T]) {
        let Dims { c, h, w, .. } = self.input;
        let (k, s) = (self.k, self.stride);
        for ci in 0..c {
            let plane = &img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * len..][..len];
                    self.segments(p0, len, ky, kx, |off, seg, iy, ix0| {
                        let dst = &mut row[off..off + seg];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(T::zero());
                            return;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let (lo, hi) = Self::valid(ix0, s, seg, w);
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        let start = (ix0 + (lo * s) as isize) as usize;
                        if s == 1 {
                            dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                        } else {
                            for (t, d) in dst[lo..hi].iter_mut().enumerate() {
                                *d = src[start + t * s];
                            }
                        }
                    });
                }
            }
        }
    }

    /// Scatter-adds `cols` back into the image gradient; adjoint of [`Self::im2col`].
    fn col2im<T: Float>(&self, cols: &[T], p0: usize, len: usize, img: &mut [T]) {
        let Dims { c, h, w, .. } = self.input;
        let (k, s) = (self.k, self.stride);
        for ci in 0..c {
            let plane = &mut img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * len..][..len];
                    self.segments(p0, len, ky, kx, |off, seg, iy, ix0| {
                        if iy < 0 || iy >= h as isize {
                            return;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let (lo, hi) = Self::valid(ix0, s, seg, w);
                        let start = (ix0 + (lo * s) as isize) as usize;
                        let src = &row[off + lo..off + hi];
                        if s == 1 {
                            for (d, &v) in dst[start..start + hi - lo].iter_mut().zip(src) {
                                *d = *d + v;
                            }
                        } else {
                            for (t, &v) in src.iter().enumerate() {
                                dst[start + t * s] = dst[start + t * s] + v;
                            }
                        }
                    });
                }
            }
        }
    }
}

/// Convolution with explicit weight `(out, in, k, k)` and bias `(1, out, 1, 1)` tensors.
pub fn conv2d_raw<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>, TensorError> {
    let g = Geometry::new(x.dims(), weight.dims(), stride)?;
    if bias.dims() != Dims::new(1, g.cout, 1, 1) {
        return Err(TensorError::mismatch("conv2d bias", Dims::new(1, g.cout, 1, 1), bias.dims()));
    }
    let (kdim, positions, blocks) = (g.patch(), g.positions(), g.blocks());
    let in_len = g.input.c * g.input.plane();
    let w = weight.data();
    let partials = parallel::map_indexed(g.input.n * blocks, |task| {
        let (n, b) = (task / blocks, task % blocks);
        let (p0, len) = g.block_range(b);
        let img = &x.data()[n * in_len..(n + 1) * in_len];
        let mut out = vec![T::zero(); g.cout * len];
        if g.is_pointwise() {
            gemm(g.cout, kdim, len, (w, kdim, 1), (&img[p0..], positions, 1), (&mut out, len, 1), false);
        } else {
            let mut cols = vec![T::zero(); kdim * len];
            g.im2col(img, p0, len, &mut cols);
            gemm(g.cout, kdim, len, (w, kdim, 1), (&cols, len, 1), (&mut out, len, 1), false);
        }
        out
    });
    let od = g.output();
    let mut data = vec![T::zero(); od.numel()];
    for (task, part) in partials.iter().enumerate() {
        let (n, b) = (task / blocks, task % blocks);
        let (p0, len) = g.block_range(b);
        for co in 0..g.cout {
            let bv = bias.data()[co];
            let dst = &mut data[(n * g.cout + co) * positions + p0..][..len];
            for (d, &v) in dst.iter_mut().zip(&part[co * len..(co + 1) * len]) {
                *d = v + bv;
            }
        }
    }
    Ok(Tensor::from_parts(od, data))
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Float> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    grad: &Tensor<T>,
) -> Result<ConvGrads<T>, TensorError> {
    let g = Geometry::new(x.dims(), weight.dims(), stride)?;
    if grad.dims() != g.output() {
        return Err(TensorError::mismatch("conv2d_backward", g.output(), grad.dims()));
    }
    let (kdim, positions, blocks) = (g.patch(), g.positions(), g.blocks());
    let in_len = g.input.c * g.input.plane();
    let out_len = g.cout * positions;
    let w = weight.data();

    let per_item = parallel::map_indexed(g.input.n, |n| {
        let img = &x.data()[n * in_len..(n + 1) * in_len];
        let gout = &grad.data()[n * out_len..(n + 1) * out_len];
        let mut dw = vec![T::zero(); g.cout * kdim];
        let mut dx = vec![T::zero(); in_len];
        let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { kdim * BLOCK }];
        let mut dcols = cols.clone();
        for b in 0..blocks {
            let (p0, len) = g.block_range(b);
            let gblk = (&gout[p0..], positions, 1);
            if g.is_pointwise() {
                gemm(g.cout, len, kdim, gblk, (&img[p0..], 1, positions), (&mut dw, kdim, 1), true);
                gemm(kdim, g.cout, len, (w, 1, kdim), gblk, (&mut dx[p0..], positions, 1), false);
            } else {
                let cols = &mut cols[..kdim * len];
                g.im2col(img, p0, len, cols);
                gemm(g.cout, len, kdim, gblk, (cols, 1, len), (&mut dw, kdim, 1), true);
                let dcols = &mut dcols[..kdim * len];
                gemm(kdim, g.cout, len, (w, 1, kdim), gblk, (dcols, len, 1), false);
                g.col2im(dcols, p0, len, &mut dx);
            }
        }
        (dw, dx)
    });

    let mut dw = vec![T::zero(); g.cout * kdim];
    let mut dx = Vec::with_capacity(x.numel());
    for (pw, px) in per_item {
        for (a, b) in dw.iter_mut().zip(pw) {
            *a = *a + b;
        }
        dx.extend(px);
    }
    let mut db = vec![T::zero(); g.cout];
    for n in 0..g.input.n {
        for (co, acc) in db.iter_mut().enumerate() {
            let s: T = grad.data()[(n * g.cout + co) * positions..][..positions].iter().copied().sum();
            *acc = *acc + s;
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_parts(g.input, dx),
        weight: Tensor::from_parts(weight.dims(), dw),
        bias: Tensor::from_parts(Dims::new(1, g.cout, 1, 1), db),
    })
}
