use std::cell::{Cell, RefCell};
use std::fmt;

use super::graph::Graph;
use crate::error::TensorError;
use crate::float::Float;
use crate::tensor::{self, Dims, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operator kinds, used for diagnostics and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Conv2d,
    Relu,
    Sigmoid,
    GlobalAvgPool,
    PixelShuffle,
    SpaceToDepth,
    Add,
    Sub,
    ChannelScale,
    Crop,
    MseLoss,
    Sum,
}

impl OpKind {
    pub const ALL: [OpKind; 12] = [
        OpKind::Conv2d,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::GlobalAvgPool,
        OpKind::PixelShuffle,
        OpKind::SpaceToDepth,
        OpKind::Add,
        OpKind::Sub,
        OpKind::ChannelScale,
        OpKind::Crop,
        OpKind::MseLoss,
        OpKind::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv2d => "conv2d",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::GlobalAvgPool => "global_avg_pool",
            OpKind::PixelShuffle => "pixel_shuffle",
            OpKind::SpaceToDepth => "space_to_depth",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::ChannelScale => "channel_scale",
            OpKind::Crop => "crop",
            OpKind::MseLoss => "mse_loss",
            OpKind::Sum => "sum",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, stride: usize },
    Relu(Var),
    Sigmoid(Var),
    GlobalAvgPool(Var),
    PixelShuffle(Var, usize),
    SpaceToDepth(Var, usize),
    Add(Var, Var),
    Sub(Var, Var),
    ChannelScale(Var, Var),
    Crop(Var),
    MseLoss(Var, Var),
    Sum(Var),
}

impl Op {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf => return None,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::PixelShuffle(..) => OpKind::PixelShuffle,
            Op::SpaceToDepth(..) => OpKind::SpaceToDepth,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::ChannelScale(..) => OpKind::ChannelScale,
            Op::Crop(_) => OpKind::Crop,
            Op::MseLoss(..) => OpKind::MseLoss,
            Op::Sum(_) => OpKind::Sum,
        })
    }
}

struct Node<T: Float> {
    value: Tensor<T>,
    op: Op,
}

/// Record of forward operations in topological order.
///
/// A tape lives for one forward/backward pass on one thread.
pub struct Tape<T: Float> {
    nodes: RefCell<Vec<Node<T>>>,
    fault: Cell<Option<OpKind>>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            fault: Cell::new(None),
        }
    }

    /// Test hook: makes the gradient rule of `kind` wrong by a factor of 1.5.
    pub fn inject_fault(&self, kind: Option<OpKind>) {
        self.fault.set(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    fn push(&self, value: Tensor<T>, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn val(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    /// Propagates `d loss / d node` from a scalar `loss` back to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let nodes = self.nodes.borrow();
        let seed_dims = nodes
            .get(loss.0)
            .ok_or_else(|| TensorError::Contract(format!("unknown node {}", loss.0)))?
            .value
            .dims();
        if seed_dims != Dims::scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got {seed_dims}"
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let fault = self.fault.get();

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let value = |v: Var| &nodes[v.0].value;
            let mut contrib: Vec<(Var, Tensor<T>)> = Vec::with_capacity(3);
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { x, w, b, stride } => {
                    let cg = tensor::conv2d_backward(value(x), value(w), stride, &g)?;
                    contrib.push((x, cg.input));
                    contrib.push((w, cg.weight));
                    contrib.push((b, cg.bias));
                }
                Op::Relu(x) => contrib.push((x, tensor::relu_backward(value(x), &g)?)),
                Op::Sigmoid(x) => contrib.push((x, tensor::sigmoid_backward(&node.value, &g)?)),
                Op::GlobalAvgPool(x) => {
                    contrib.push((x, tensor::global_avg_pool_backward(value(x).dims(), &g)?))
                }
                Op::PixelShuffle(x, r) => contrib.push((x, tensor::space_to_depth(&g, r)?)),
                Op::SpaceToDepth(x, r) => contrib.push((x, tensor::pixel_shuffle(&g, r)?)),
                Op::Add(x, y) => {
                    contrib.push((x, g.clone()));
                    contrib.push((y, g));
                }
                Op::Sub(x, y) => {
                    contrib.push((x, g.clone()));
                    contrib.push((y, tensor::scale(&g, -T::one())));
                }
                Op::ChannelScale(x, s) => {
                    let (dx, ds) = tensor::channel_scale_backward(value(x), value(s), &g)?;
                    contrib.push((x, dx));
                    contrib.push((s, ds));
                }
                Op::Crop(x) => contrib.push((x, tensor::crop_backward(value(x).dims(), &g)?)),
                Op::MseLoss(p, t) => {
                    let k = g.data()[0] / T::lit(value(p).numel() as f64);
                    let dp = value(p).zip_map(value(t), |a, b| (a - b) * k)?;
                    contrib.push((t, tensor::scale(&dp, -T::one())));
                    contrib.push((p, dp));
                }
                Op::Sum(x) => contrib.push((x, Tensor::full(value(x).dims(), g.data()[0]))),
            }
            let corrupt = fault.is_some() && fault == node.op.kind();
            for (v, mut d) in contrib {
                if corrupt {
                    d = tensor::scale(&d, T::lit(1.5));
                }
                grads[v.0] = Some(match grads[v.0].take() {
                    Some(acc) => tensor::add(&acc, &d)?,
                    None => d,
                });
            }
        }
        let dims = nodes.iter().map(|n| n.value.dims()).collect();
        Ok(Gradients { grads, dims })
    }
}

impl<T: Float> Graph<T> for Tape<T> {
    type Var = Var;

    fn input(&self, t: Tensor<T>) -> Var {
        self.leaf(t)
    }

    fn value(&self, v: &Var) -> Tensor<T> {
        self.val(*v)
    }

    fn conv2d(&self, x: &Var, w: &Var, b: &Var, stride: usize) -> Result<Var, TensorError> {
        let y = tensor::conv2d_raw(&self.val(*x), &self.val(*w), &self.val(*b), stride)?;
        Ok(self.push(y, Op::Conv2d { x: *x, w: *w, b: *b, stride }))
    }

    fn relu(&self, x: &Var) -> Var {
        self.push(tensor::relu(&self.val(*x)), Op::Relu(*x))
    }

    fn sigmoid(&self, x: &Var) -> Var {
        self.push(tensor::sigmoid(&self.val(*x)), Op::Sigmoid(*x))
    }

    fn global_avg_pool(&self, x: &Var) -> Result<Var, TensorError> {
        let y = tensor::global_avg_pool(&self.val(*x))?;
        Ok(self.push(y, Op::GlobalAvgPool(*x)))
    }

    fn pixel_shuffle(&self, x: &Var, r: usize) -> Result<Var, TensorError> {
        let y = tensor::pixel_shuffle(&self.val(*x), r)?;
        Ok(self.push(y, Op::PixelShuffle(*x, r)))
    }

    fn space_to_depth(&self, x: &Var, r: usize) -> Result<Var, TensorError> {
        let y = tensor::space_to_depth(&self.val(*x), r)?;
        Ok(self.push(y, Op::SpaceToDepth(*x, r)))
    }

    fn add(&self, x: &Var, y: &Var) -> Result<Var, TensorError> {
        let z = tensor::add(&self.val(*x), &self.val(*y))?;
        Ok(self.push(z, Op::Add(*x, *y)))
    }

    fn sub(&self, x: &Var, y: &Var) -> Result<Var, TensorError> {
        let z = tensor::sub(&self.val(*x), &self.val(*y))?;
        Ok(self.push(z, Op::Sub(*x, *y)))
    }

    fn channel_scale(&self, x: &Var, s: &Var) -> Result<Var, TensorError> {
        let z = tensor::channel_scale(&self.val(*x), &self.val(*s))?;
        Ok(self.push(z, Op::ChannelScale(*x, *s)))
    }

    fn crop(&self, x: &Var, h: usize, w: usize) -> Result<Var, TensorError> {
        let z = tensor::crop(&self.val(*x), h, w)?;
        Ok(self.push(z, Op::Crop(*x)))
    }

    fn mse_loss(&self, pred: &Var, target: &Var) -> Result<Var, TensorError> {
        let l = tensor::mse(&self.val(*pred), &self.val(*target))?;
        Ok(self.push(Tensor::scalar(l), Op::MseLoss(*pred, *target)))
    }

    fn sum(&self, x: &Var) -> Var {
        let s = self.val(*x).sum();
        self.push(Tensor::scalar(s), Op::Sum(*x))
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T: Float> {
    grads: Vec<Option<Tensor<T>>>,
    dims: Vec<Dims>,
}

impl<T: Float> Gradients<T> {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.dims[v.0]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn([2, 3, 2, 2], |n, c, h, w| (n + c + h + w) as f64));
        let s = tape.sum(&x);
        let g = tape.backward(s).unwrap();
        assert!(g.wrt(x).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([1, 2, 2, 2], 0.5));
        let y = tape.add(&x, &x).unwrap();
        let z = tape.add(&y, &x).unwrap();
        let g = tape.backward(tape.sum(&z)).unwrap();
        assert!(g.wrt(x).data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn unreachable_leaf_gets_zeros() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones([1, 1, 2, 2]));
        let unused = tape.leaf(Tensor::ones([1, 3, 1, 1]));
        let g = tape.backward(tape.sum(&x)).unwrap();
        assert_eq!(g.wrt(unused), Tensor::zeros([1, 3, 1, 1]));
    }

    #[test]
    fn non_scalar_seed_is_rejected() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones([1, 1, 2, 2]));
        let y = tape.relu(&x);
        assert!(matches!(tape.backward(y), Err(TensorError::Contract(_))));
    }

    #[test]
    fn mse_gradient_closed_form() {
        let tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::full([1, 1, 1, 2], 1.0));
        let t = tape.leaf(Tensor::zeros([1, 1, 1, 2]));
        let l = tape.mse_loss(&p, &t).unwrap();
        assert_eq!(tape.value(&l).data(), &[0.5]);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(p).data(), &[0.5, 0.5]);
        assert_eq!(g.wrt(t).data(), &[-0.5, -0.5]);
    }

    #[test]
    fn op_names_round_trip() {
        for k in OpKind::ALL {
            assert_eq!(OpKind::from_name(k.name()), Some(k));
        }
    }
}
