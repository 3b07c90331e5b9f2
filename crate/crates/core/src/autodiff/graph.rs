use std::cell::RefCell;
use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::error::TensorError;
use crate::float::Float;
use crate::tensor::{self, Tensor};

/// Operator set the network is built from.
pub trait Graph<T: Float> {
    type Var: Clone;

    /// Introduces a tensor into the graph (a leaf on a tape).
    fn input(&self, t: Tensor<T>) -> Self::Var;
    fn value(&self, v: &Self::Var) -> Tensor<T>;

    fn conv2d(
        &self,
        x: &Self::Var,
        weight: &Self::Var,
        bias: &Self::Var,
        stride: usize,
    ) -> Result<Self::Var, TensorError>;
    fn relu(&self, x: &Self::Var) -> Self::Var;
    fn sigmoid(&self, x: &Self::Var) -> Self::Var;
    fn global_avg_pool(&self, x: &Self::Var) -> Result<Self::Var, TensorError>;
    fn pixel_shuffle(&self, x: &Self::Var, r: usize) -> Result<Self::Var, TensorError>;
    fn space_to_depth(&self, x: &Self::Var, r: usize) -> Result<Self::Var, TensorError>;
    fn add(&self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var, TensorError>;
    fn sub(&self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var, TensorError>;
    fn channel_scale(&self, x: &Self::Var, s: &Self::Var) -> Result<Self::Var, TensorError>;
    /// Top-left `h x w` window.
    fn crop(&self, x: &Self::Var, h: usize, w: usize) -> Result<Self::Var, TensorError>;
    /// Scalar `sum((pred - target)^2) / (2 * numel)`.
    fn mse_loss(&self, pred: &Self::Var, target: &Self::Var) -> Result<Self::Var, TensorError>;
    fn sum(&self, x: &Self::Var) -> Self::Var;
}

/// Value-only evaluation.
///
/// With [`Eval::recording`] it also fingerprints every ReLU activation
/// pattern, which lets finite-difference checks detect perturbations that
/// cross a kink.
#[derive(Debug, Default)]
pub struct Eval {
    pattern: Option<RefCell<DefaultHasher>>,
}

impl Eval {
    pub fn new() -> Self {
        Eval { pattern: None }
    }

    pub fn recording() -> Self {
        Eval {
            pattern: Some(RefCell::new(DefaultHasher::new())),
        }
    }

    /// Fingerprint of all ReLU masks seen so far (0 when not recording).
    pub fn relu_pattern(&self) -> u64 {
        self.pattern.as_ref().map_or(0, |h| h.borrow().finish())
    }
}

impl<T: Float> Graph<T> for Eval {
    type Var = Tensor<T>;

    fn input(&self, t: Tensor<T>) -> Tensor<T> {
        t
    }

    fn value(&self, v: &Tensor<T>) -> Tensor<T> {
        v.clone()
    }

    fn conv2d(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize) -> Result<Tensor<T>, TensorError> {
        tensor::conv2d_raw(x, w, b, stride)
    }

    fn relu(&self, x: &Tensor<T>) -> Tensor<T> {
        if let Some(h) = &self.pattern {
            let mut h = h.borrow_mut();
            for chunk in x.data().chunks(64) {
                let bits = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &v)| acc | (u64::from(v > T::zero()) << i));
                h.write_u64(bits);
            }
        }
        tensor::relu(x)
    }

    fn sigmoid(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::sigmoid(x)
    }

    fn global_avg_pool(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        tensor::global_avg_pool(x)
    }

    fn pixel_shuffle(&self, x: &Tensor<T>, r: usize) -> Result<Tensor<T>, TensorError> {
        tensor::pixel_shuffle(x, r)
    }

    fn space_to_depth(&self, x: &Tensor<T>, r: usize) -> Result<Tensor<T>, TensorError> {
        tensor::space_to_depth(x, r)
    }

    fn add(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        tensor::add(x, y)
    }

    fn sub(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        tensor::sub(x, y)
    }

    fn channel_scale(&self, x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        tensor::channel_scale(x, s)
    }

    fn crop(&self, x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>, TensorError> {
        tensor::crop(x, h, w)
    }

    fn mse_loss(&self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        Ok(Tensor::scalar(tensor::mse(pred, target)?))
    }

    fn sum(&self, x: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(x.sum())
    }
}
