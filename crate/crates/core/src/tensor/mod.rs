//! Dense rank-4 tensors in `(batch, channel, height, width)` layout.

mod conv;
mod ops;

use std::fmt;
use std::sync::Arc;

use crate::error::TensorError;
use crate::float::Float;

pub use conv::{conv2d, conv2d_backward, conv2d_raw, ConvGrads, ConvParams};
pub use ops::*;

/// Extents of a rank-4 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Dims::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }
}

/// Immutable dense tensor. Cloning shares the underlying buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Dims,
    data: Arc<Vec<T>>,
}

impl<T: Float> Tensor<T> {
    pub fn new(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self, TensorError> {
        let dims = dims.into();
        if data.len() != dims.numel() {
            return Err(TensorError::BadLength {
                op: "tensor",
                dims,
                len: data.len(),
            });
        }
        Ok(Tensor {
            dims,
            data: Arc::new(data),
        })
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.numel(), data.len());
        Tensor {
            dims,
            data: Arc::new(data),
        }
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Self {
        let dims = dims.into();
        Self::from_parts(dims, vec![value; dims.numel()])
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Dims::scalar(), value)
    }

    pub fn from_fn(
        dims: impl Into<Dims>,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let d = dims.into();
        let mut data = Vec::with_capacity(d.numel());
        for n in 0..d.n {
            for c in 0..d.c {
                for h in 0..d.h {
                    for w in 0..d.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self::from_parts(d, data)
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.dims.offset(n, c, h, w)]
    }

    /// Mutable access; copies the buffer first if it is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn reshape(&self, dims: impl Into<Dims>) -> Result<Self, TensorError> {
        let dims = dims.into();
        if dims.numel() != self.numel() {
            return Err(TensorError::mismatch("reshape", self.dims, dims));
        }
        Ok(Tensor {
            dims,
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.dims, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, TensorError> {
        if self.dims != other.dims {
            return Err(TensorError::mismatch("zip", self.dims, other.dims));
        }
        Ok(Self::from_parts(
            self.dims,
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.dims,
            self.data.iter().map(|&x| U::lit(x.to_f64())).collect(),
        )
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.numel().max(1) as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Slice of one `(n, c)` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    /// Selects one batch item as a `1 x c x h x w` tensor.
    pub fn item(&self, n: usize) -> Tensor<T> {
        let d = self.dims;
        let len = d.c * d.plane();
        Self::from_parts(
            Dims::new(1, d.c, d.h, d.w),
            self.data[n * len..(n + 1) * len].to_vec(),
        )
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self, TensorError> {
        let first = items
            .first()
            .ok_or_else(|| TensorError::Contract("stack of zero tensors".into()))?
            .dims;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        let mut n = 0;
        for t in items {
            let d = t.dims;
            if (d.c, d.h, d.w) != (first.c, first.h, first.w) {
                return Err(TensorError::mismatch("stack", first, d));
            }
            n += d.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Self::from_parts(Dims::new(n, first.c, first.h, first.w), data))
    }
}

impl<T: Float> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor<{}>[{}] ", T::NAME, self.dims)?;
        let mut list = f.debug_list();
        list.entries(self.data.iter().take(SHOWN));
        if self.numel() > SHOWN {
            list.entry(&format_args!("... {} more", self.numel() - SHOWN));
        }
        list.finish()
    }
}
