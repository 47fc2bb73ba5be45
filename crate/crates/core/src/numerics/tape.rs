use crate::error::{Error, Result};

use super::activation::Activation;
use super::norm::NormMode;
use super::tensor::{Scalar, Tensor};
use super::{activation, conv, linalg, loss, norm, shape_ops};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias {
        x: Var,
        bias: Var,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Activation {
        x: Var,
        kind: Activation,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Normalize {
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    GlobalAvgPool(Var),
    MeanAxis {
        x: Var,
        axis: usize,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    ScaleChannels {
        x: Var,
        gate: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::GlobalAvgPool(x)
            | Op::Reshape(x)
            | Op::Activation { x, .. }
            | Op::Softmax { x, .. }
            | Op::MeanAxis { x, .. }
            | Op::Permute { x, .. } => vec![*x],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::MatMul { a, b } => vec![*a, *b],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::Normalize { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::ScaleChannels { x, gate } => vec![*x, *gate],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Computation record for one forward/backward pass.
///
/// Values are immutable once recorded. A tape supports a single
/// [`backward`](Tape::backward) call; call [`zero_grad`](Tape::zero_grad)
/// before running it again.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Clears every gradient so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backward_done = false;
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    ///
    /// Afterwards every node that requires a gradient and feeds `loss` holds
    /// one; contributions through shared subexpressions are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this tape; call zero_grad first".into(),
            ));
        }
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {shape:?}"
            )));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Tensor::new(shape, vec![T::one()])?);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.op_backward(i, &grad)?;
            self.nodes[i].grad = Some(grad);
            for (v, g) in contributions {
                let node = &mut self.nodes[v.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.accumulate(&g),
                    slot @ None => *slot = Some(g),
                }
                if !node.grad.as_ref().is_some_and(Tensor::is_finite) {
                    return Err(Error::NonFinite { op: "backward" });
                }
            }
        }
        Ok(())
    }

    fn op_backward(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let out = &self.nodes[i].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        Ok(match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => linalg::mul_backward(*a, *b, val(*a), val(*b), g),
            Op::Scale(x, factor) => vec![(*x, g.map(|v| v * *factor))],
            Op::AddBias { x, bias } => linalg::add_bias_backward(*x, *bias, val(*bias), g),
            Op::MatMul { a, b } => linalg::matmul_backward(*a, *b, val(*a), val(*b), g, needs),
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => conv::conv2d_backward(
                conv::ConvArgs {
                    input: *input,
                    weight: *weight,
                    bias: *bias,
                    stride: *stride,
                    pad: *pad,
                },
                val(*input),
                val(*weight),
                g,
                needs,
            ),
            Op::Activation { x, kind } => {
                vec![(*x, activation::activation_backward(*kind, val(*x), out, g))]
            }
            Op::Softmax { x, axis } => vec![(*x, activation::softmax_backward(out, g, *axis))],
            Op::Normalize {
                x,
                gamma,
                beta,
                mode,
                xhat,
                inv_std,
            } => norm::normalize_backward(
                (*x, *gamma, *beta),
                *mode,
                val(*x).shape(),
                val(*gamma),
                xhat,
                inv_std,
                g,
            ),
            Op::GlobalAvgPool(x) => vec![(*x, shape_ops::global_avg_pool_backward(val(*x), g))],
            Op::MeanAxis { x, axis } => {
                vec![(*x, shape_ops::mean_axis_backward(val(*x).shape(), *axis, g))]
            }
            Op::Reshape(x) => vec![(*x, g.clone().reshape(val(*x).shape().to_vec())?)],
            Op::Permute { x, perm } => vec![(*x, shape_ops::permute_backward(g, perm))],
            Op::ScaleChannels { x, gate } => {
                linalg::scale_channels_backward(*x, *gate, val(*x), val(*gate), g)
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => vec![(
                *logits,
                loss::cross_entropy_backward(val(*logits).shape(), labels, probs, g),
            )],
        })
    }
}
