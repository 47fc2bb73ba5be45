use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::tensor::{Scalar, Tensor};

/// How [`Tape::normalize`] groups elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Standardize over the last axis; affine parameters have its extent.
    Layer,
    /// Split the channel axis (axis 1) of `[N,C,..]` into `g` groups and
    /// standardize each group over its channels and spatial positions.
    /// Affine parameters have extent `C`.
    Group(usize),
}

/// Contiguous group length, number of affine params, and the mapping from
/// (group, offset-in-group) to affine param index.
struct Layout {
    group_len: usize,
    params: usize,
    groups_per_sample: usize,
    plane: usize,
}

impl Layout {
    fn new(shape: &[usize], mode: NormMode) -> Result<Self> {
        match mode {
            NormMode::Layer => {
                let d = *shape
                    .last()
                    .ok_or_else(|| Error::Shape("layer norm of a scalar".into()))?;
                Ok(Self {
                    group_len: d,
                    params: d,
                    groups_per_sample: 1,
                    plane: 1,
                })
            }
            NormMode::Group(g) => {
                if shape.len() < 2 {
                    return Err(Error::Shape(format!(
                        "group norm needs [N,C,..], got {shape:?}"
                    )));
                }
                let c = shape[1];
                if g == 0 || !c.is_multiple_of(g) {
                    return Err(Error::InvalidArgument(format!(
                        "group count {g} does not divide {c} channels"
                    )));
                }
                let plane: usize = shape[2..].iter().product();
                Ok(Self {
                    group_len: (c / g) * plane,
                    params: c,
                    groups_per_sample: g,
                    plane,
                })
            }
        }
    }

    fn param_index(&self, group: usize, offset: usize) -> usize {
        let per_group = self.params / self.groups_per_sample;
        (group % self.groups_per_sample) * per_group + offset / self.plane
    }
}

impl<T: Scalar> Tape<T> {
    /// `gamma * (x - mean) / sqrt(var + eps) + beta` per normalization group.
    pub fn normalize(
        &mut self,
        x: Var,
        mode: NormMode,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {eps}"
            )));
        }
        let vx = self.value(x);
        let layout = Layout::new(vx.shape(), mode)?;
        let (vg, vb) = (self.value(gamma), self.value(beta));
        if vg.shape() != [layout.params] || vb.shape() != [layout.params] {
            return Err(Error::Shape(format!(
                "normalize: input {:?} needs affine extent {}, got gamma {:?} beta {:?}",
                vx.shape(),
                layout.params,
                vg.shape(),
                vb.shape()
            )));
        }
        let n = T::of(layout.group_len as f64);
        let eps = T::of(eps);
        let mut xhat = Vec::with_capacity(vx.numel());
        let mut inv_std = Vec::with_capacity(vx.numel() / layout.group_len);
        let mut out = Vec::with_capacity(vx.numel());
        for (gi, group) in vx.data().chunks(layout.group_len).enumerate() {
            let mean = group.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = group
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in group.iter().enumerate() {
                let h = (v - mean) * inv;
                let p = layout.param_index(gi, j);
                xhat.push(h);
                out.push(h * vg.data()[p] + vb.data()[p]);
            }
        }
        let out = Tensor::new(vx.shape().to_vec(), out)?;
        self.push(
            out,
            Op::Normalize {
                x,
                gamma,
                beta,
                mode,
                xhat,
                inv_std,
            },
            "normalize",
        )
    }
}

pub(super) fn normalize_backward<T: Scalar>(
    (x, gamma, beta): (Var, Var, Var),
    mode: NormMode,
    shape: &[usize],
    vg: &Tensor<T>,
    xhat: &[T],
    inv_std: &[T],
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let layout = Layout::new(shape, mode).expect("checked in forward");
    let m = layout.group_len;
    let mf = T::of(m as f64);
    let mut gx = Tensor::zeros(shape);
    let mut ggamma = Tensor::zeros(vg.shape());
    let mut gbeta = Tensor::zeros(vg.shape());
    let mut dxhat = vec![T::zero(); m];
    for (gi, &inv) in inv_std.iter().enumerate() {
        let base = gi * m;
        let (mut sum_d, mut sum_dh) = (T::zero(), T::zero());
        for j in 0..m {
            let p = layout.param_index(gi, j);
            let go = g.data()[base + j];
            let h = xhat[base + j];
            ggamma.data_mut()[p] = ggamma.data()[p] + go * h;
            gbeta.data_mut()[p] = gbeta.data()[p] + go;
            let d = go * vg.data()[p];
            dxhat[j] = d;
            sum_d = sum_d + d;
            sum_dh = sum_dh + d * h;
        }
        let scale = inv / mf;
        for j in 0..m {
            gx.data_mut()[base + j] = scale * (mf * dxhat[j] - sum_d - xhat[base + j] * sum_dh);
        }
    }
    vec![(x, gx), (gamma, ggamma), (beta, gbeta)]
}
