//! Elementwise arithmetic, broadcasts and matrix products.

use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::tensor::{Scalar, Tensor};

fn same_shape(a: &[usize], b: &[usize], op: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{op}: {a:?} vs {b:?}")));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va.shape(), vb.shape(), "add")?;
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push(out, Op::Add(a, b), "add")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va.shape(), vb.shape(), "mul")?;
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = T::of(factor);
        let out = self.value(x).map(|v| v * f);
        self.push(out, Op::Scale(x, f), "scale")
    }

    /// `x + bias` with `bias` broadcast along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let d = *vx.shape().last().unwrap_or(&1);
        if vb.shape() != [d] {
            return Err(Error::Shape(format!(
                "add_bias: input {:?} vs bias {:?}",
                vx.shape(),
                vb.shape()
            )));
        }
        let mut out = vx.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, &b) in row.iter_mut().zip(vb.data()) {
                *o = *o + b;
            }
        }
        self.push(out, Op::AddBias { x, bias }, "add_bias")
    }

    /// Matrix product `[M,K] x [K,N]`, or batched `[B,M,K] x [B,K,N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let dims = matmul_dims(va.shape(), vb.shape())?;
        let (batch, m, k, n) = dims;
        let mut c = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            T::gemm(
                m,
                k,
                n,
                T::one(),
                &va.data()[i * m * k..(i + 1) * m * k],
                (k, 1),
                &vb.data()[i * k * n..(i + 1) * k * n],
                (n, 1),
                T::zero(),
                &mut c[i * m * n..(i + 1) * m * n],
                (n, 1),
            );
        }
        let shape = if va.rank() == 2 {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        self.push(Tensor::new(shape, c)?, Op::MatMul { a, b }, "matmul")
    }

    /// Multiplies each `[H,W,..]` plane of `x: [N,C,..]` by `gate[n,c]`.
    pub fn scale_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (vx, vg) = (self.value(x), self.value(gate));
        if vx.rank() < 2 || vg.shape() != &vx.shape()[..2] {
            return Err(Error::Shape(format!(
                "scale_channels: input {:?} vs gate {:?}",
                vx.shape(),
                vg.shape()
            )));
        }
        let plane: usize = vx.shape()[2..].iter().product();
        let mut out = vx.clone();
        for (chunk, &s) in out.data_mut().chunks_mut(plane).zip(vg.data()) {
            for v in chunk {
                *v = *v * s;
            }
        }
        self.push(out, Op::ScaleChannels { x, gate }, "scale_channels")
    }
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize, usize)> {
    let err = || Error::Shape(format!("matmul: {a:?} x {b:?}"));
    match (a, b) {
        ([m, k], [k2, n]) if k == k2 => Ok((1, *m, *k, *n)),
        ([ba, m, k], [bb, k2, n]) if ba == bb && k == k2 => Ok((*ba, *m, *k, *n)),
        _ => Err(err()),
    }
}

pub(super) fn mul_backward<T: Scalar>(
    a: Var,
    b: Var,
    va: &Tensor<T>,
    vb: &Tensor<T>,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let ga = Tensor::from_fn(g.shape(), |i| g.data()[i] * vb.data()[i]);
    let gb = Tensor::from_fn(g.shape(), |i| g.data()[i] * va.data()[i]);
    vec![(a, ga), (b, gb)]
}

pub(super) fn add_bias_backward<T: Scalar>(
    x: Var,
    bias: Var,
    vb: &Tensor<T>,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let d = vb.numel();
    let mut gb = Tensor::zeros(vb.shape());
    for row in g.data().chunks(d) {
        for (acc, &v) in gb.data_mut().iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    vec![(x, g.clone()), (bias, gb)]
}

pub(super) fn matmul_backward<T: Scalar>(
    a: Var,
    b: Var,
    va: &Tensor<T>,
    vb: &Tensor<T>,
    g: &Tensor<T>,
    needs: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let (batch, m, k, n) = matmul_dims(va.shape(), vb.shape()).expect("checked in forward");
    let mut out = Vec::with_capacity(2);
    if needs(a) {
        // dA = dC * B^T
        let mut ga = Tensor::zeros(va.shape());
        for i in 0..batch {
            T::gemm(
                m,
                n,
                k,
                T::one(),
                &g.data()[i * m * n..(i + 1) * m * n],
                (n, 1),
                &vb.data()[i * k * n..(i + 1) * k * n],
                (1, n),
                T::zero(),
                &mut ga.data_mut()[i * m * k..(i + 1) * m * k],
                (k, 1),
            );
        }
        out.push((a, ga));
    }
    if needs(b) {
        // dB = A^T * dC
        let mut gb = Tensor::zeros(vb.shape());
        for i in 0..batch {
            T::gemm(
                k,
                m,
                n,
                T::one(),
                &va.data()[i * m * k..(i + 1) * m * k],
                (1, k),
                &g.data()[i * m * n..(i + 1) * m * n],
                (n, 1),
                T::zero(),
                &mut gb.data_mut()[i * k * n..(i + 1) * k * n],
                (n, 1),
            );
        }
        out.push((b, gb));
    }
    out
}

pub(super) fn scale_channels_backward<T: Scalar>(
    x: Var,
    gate: Var,
    vx: &Tensor<T>,
    vg: &Tensor<T>,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let plane: usize = vx.shape()[2..].iter().product();
    let mut gx = g.clone();
    let mut gg = Tensor::zeros(vg.shape());
    for (c, &s) in vg.data().iter().enumerate() {
        let range = c * plane..(c + 1) * plane;
        let mut acc = T::zero();
        for ((dx, &go), &xv) in gx.data_mut()[range.clone()]
            .iter_mut()
            .zip(&g.data()[range.clone()])
            .zip(&vx.data()[range])
        {
            *dx = go * s;
            acc = acc + go * xv;
        }
        gg.data_mut()[c] = acc;
    }
    vec![(x, gx), (gate, gg)]
}
