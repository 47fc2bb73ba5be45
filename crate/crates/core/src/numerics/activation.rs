use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `max(x, 0)`; the derivative at exactly 0 is taken as 0.
    Relu,
    Sigmoid,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let out = match kind {
            Activation::Relu => self.value(x).map(|v| v.max(T::zero())),
            Activation::Sigmoid => self.value(x).map(sigmoid),
        };
        self.push(out, Op::Activation { x, kind }, "activation")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    /// Softmax along `axis`, shifted by the per-slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let vx = self.value(x);
        if axis >= vx.rank() {
            return Err(Error::Shape(format!(
                "softmax axis {axis} out of range for {:?}",
                vx.shape()
            )));
        }
        let (outer, len, inner) = split_axis(vx.shape(), axis);
        let mut out = vx.clone();
        let data = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len)
                    .map(|j| data[at(j)])
                    .fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for j in 0..len {
                    let e = (data[at(j)] - max).exp();
                    data[at(j)] = e;
                    sum = sum + e;
                }
                for j in 0..len {
                    data[at(j)] = data[at(j)] / sum;
                }
            }
        }
        self.push(out, Op::Softmax { x, axis }, "softmax")
    }
}

/// `(outer, axis extent, inner)` sizes around `axis`.
pub(super) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(super) fn activation_backward<T: Scalar>(
    kind: Activation,
    x: &Tensor<T>,
    out: &Tensor<T>,
    g: &Tensor<T>,
) -> Tensor<T> {
    match kind {
        Activation::Relu => Tensor::from_fn(g.shape(), |i| {
            if x.data()[i] > T::zero() {
                g.data()[i]
            } else {
                T::zero()
            }
        }),
        Activation::Sigmoid => Tensor::from_fn(g.shape(), |i| {
            let s = out.data()[i];
            g.data()[i] * s * (T::one() - s)
        }),
    }
}

pub(super) fn softmax_backward<T: Scalar>(
    out: &Tensor<T>,
    g: &Tensor<T>,
    axis: usize,
) -> Tensor<T> {
    let (outer, len, inner) = split_axis(out.shape(), axis);
    let (s, gd) = (out.data(), g.data());
    let mut gx = Tensor::zeros(out.shape());
    let dx = gx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let dot = (0..len).fold(T::zero(), |acc, j| acc + gd[at(j)] * s[at(j)]);
            for j in 0..len {
                dx[at(j)] = s[at(j)] * (gd[at(j)] - dot);
            }
        }
    }
    gx
}
