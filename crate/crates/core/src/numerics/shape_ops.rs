//! Reshapes, axis permutations and mean reductions.

use crate::error::{Error, Result};

use super::activation::split_axis;
use super::tape::{Op, Tape, Var};
use super::tensor::{Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec()).map_err(|_| {
            Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape(x)))
        })?;
        self.push(out, Op::Reshape(x), "reshape")
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let mut seen = vec![false; vx.rank()];
        if perm.len() != vx.rank()
            || perm
                .iter()
                .any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Shape(format!(
                "invalid permutation {perm:?} for {:?}",
                vx.shape()
            )));
        }
        let out = permute_tensor(vx, perm);
        self.push(
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            "permute",
        )
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let vx = self.value(x);
        if axis >= vx.rank() {
            return Err(Error::Shape(format!(
                "mean axis {axis} out of range for {:?}",
                vx.shape()
            )));
        }
        let (outer, len, inner) = split_axis(vx.shape(), axis);
        let n = T::of(len as f64);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let row = &vx.data()[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (acc, &v) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
        }
        for v in &mut data {
            *v = *v / n;
        }
        let mut shape = vx.shape().to_vec();
        shape.remove(axis);
        self.push(
            Tensor::new(shape, data)?,
            Op::MeanAxis { x, axis },
            "mean_axis",
        )
    }

    /// `[N,C,H,W] -> [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.rank() != 4 {
            return Err(Error::Shape(format!(
                "global_avg_pool expects [N,C,H,W], got {:?}",
                vx.shape()
            )));
        }
        let plane = vx.shape()[2] * vx.shape()[3];
        let n = T::of(plane as f64);
        let data = vx
            .data()
            .chunks(plane)
            .map(|c| c.iter().fold(T::zero(), |a, &v| a + v) / n)
            .collect();
        let out = Tensor::new(vx.shape()[..2].to_vec(), data)?;
        self.push(out, Op::GlobalAvgPool(x), "global_avg_pool")
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_tensor<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let in_strides = strides(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut idx = vec![0usize; out_shape.len()];
    let mut data = Vec::with_capacity(x.numel());
    for _ in 0..x.numel() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        data.push(x.data()[off]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(out_shape, data).expect("permutation preserves numel")
}

pub(super) fn permute_backward<T: Scalar>(g: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    permute_tensor(g, &inverse)
}

pub(super) fn mean_axis_backward<T: Scalar>(
    shape: &[usize],
    axis: usize,
    g: &Tensor<T>,
) -> Tensor<T> {
    let (outer, len, inner) = split_axis(shape, axis);
    let n = T::of(len as f64);
    let mut gx = Tensor::zeros(shape);
    for o in 0..outer {
        for j in 0..len {
            for i in 0..inner {
                gx.data_mut()[(o * len + j) * inner + i] = g.data()[o * inner + i] / n;
            }
        }
    }
    gx
}

pub(super) fn global_avg_pool_backward<T: Scalar>(x: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let plane = x.shape()[2] * x.shape()[3];
    let n = T::of(plane as f64);
    let mut gx = Tensor::zeros(x.shape());
    for (chunk, &go) in gx.data_mut().chunks_mut(plane).zip(g.data()) {
        chunk.fill(go / n);
    }
    gx
}
