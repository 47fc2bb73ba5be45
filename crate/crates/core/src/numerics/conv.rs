//! 2D convolution via im2col + GEMM.

use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy)]
pub(super) struct ConvArgs {
    pub input: Var,
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let mismatch = || Error::Shape(format!("conv2d: input {input:?} vs weight {weight:?}"));
        let (&[n, cin, h, w], &[cout, wcin, kh, kw]) = (input, weight) else {
            return Err(mismatch());
        };
        if wcin != cin || kh != kw || stride == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(mismatch());
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            k: kh,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    /// Source pixel for kernel tap `(ky, kx)` at output `(oy, ox)`, if inside.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// Fills `cols: [Cin*k*k, Ho*Wo]` from one sample `x: [Cin,H,W]`.
fn im2col<T: Scalar>(geo: &Geometry, x: &[T], cols: &mut [T]) {
    let p = geo.positions();
    for c in 0..geo.cin {
        let plane = &x[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
        for ky in 0..geo.k {
            for kx in 0..geo.k {
                let row = (c * geo.k + ky) * geo.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..geo.ho {
                    for ox in 0..geo.wo {
                        dst[oy * geo.wo + ox] = match geo.source(oy, ox, ky, kx) {
                            Some((y, x)) => plane[y * geo.w + x],
                            None => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into one sample's input gradient.
fn col2im<T: Scalar>(geo: &Geometry, cols: &[T], dx: &mut [T]) {
    let p = geo.positions();
    for c in 0..geo.cin {
        let plane = &mut dx[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
        for ky in 0..geo.k {
            for kx in 0..geo.k {
                let row = (c * geo.k + ky) * geo.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..geo.ho {
                    for ox in 0..geo.wo {
                        if let Some((y, x)) = geo.source(oy, ox, ky, kx) {
                            let d = &mut plane[y * geo.w + x];
                            *d = *d + src[oy * geo.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Zero-padded 2D cross-correlation.
    ///
    /// `input: [N,Cin,H,W]`, `weight: [Cout,Cin,k,k]`, `bias: [Cout]`.
    /// Output is `[N,Cout,(H+2p-k)/s+1,(W+2p-k)/s+1]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (vx, vw) = (self.value(input), self.value(weight));
        let geo = Geometry::new(vx.shape(), vw.shape(), stride, pad)?;
        let vb = match bias {
            Some(b) => {
                let vb = self.value(b);
                if vb.shape() != [geo.cout] {
                    return Err(Error::Shape(format!(
                        "conv2d: bias {:?} vs weight {:?}",
                        vb.shape(),
                        vw.shape()
                    )));
                }
                Some(vb.data())
            }
            None => None,
        };

        let (patch, pos) = (geo.patch(), geo.positions());
        let in_sample = geo.cin * geo.h * geo.w;
        let out_sample = geo.cout * pos;
        let mut cols = vec![T::zero(); patch * pos];
        let mut out = vec![T::zero(); geo.n * out_sample];
        for i in 0..geo.n {
            im2col(
                &geo,
                &vx.data()[i * in_sample..(i + 1) * in_sample],
                &mut cols,
            );
            let dst = &mut out[i * out_sample..(i + 1) * out_sample];
            T::gemm(
                geo.cout,
                patch,
                pos,
                T::one(),
                vw.data(),
                (patch, 1),
                &cols,
                (pos, 1),
                T::zero(),
                dst,
                (pos, 1),
            );
            if let Some(b) = vb {
                for (row, &bv) in dst.chunks_mut(pos).zip(b) {
                    for v in row {
                        *v = *v + bv;
                    }
                }
            }
        }
        let out = Tensor::new(vec![geo.n, geo.cout, geo.ho, geo.wo], out)?;
        self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            "conv2d",
        )
    }
}

pub(super) fn conv2d_backward<T: Scalar>(
    args: ConvArgs,
    vx: &Tensor<T>,
    vw: &Tensor<T>,
    g: &Tensor<T>,
    needs: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let geo =
        Geometry::new(vx.shape(), vw.shape(), args.stride, args.pad).expect("checked in forward");
    let (patch, pos) = (geo.patch(), geo.positions());
    let in_sample = geo.cin * geo.h * geo.w;
    let out_sample = geo.cout * pos;
    let need_x = needs(args.input);
    let need_w = needs(args.weight);

    let mut gx = need_x.then(|| Tensor::zeros(vx.shape()));
    let mut gw = need_w.then(|| Tensor::zeros(vw.shape()));
    let mut cols = vec![T::zero(); patch * pos];
    for i in 0..geo.n {
        let go = &g.data()[i * out_sample..(i + 1) * out_sample];
        if let Some(gw) = &mut gw {
            im2col(
                &geo,
                &vx.data()[i * in_sample..(i + 1) * in_sample],
                &mut cols,
            );
            // dW += dY * cols^T
            T::gemm(
                geo.cout,
                pos,
                patch,
                T::one(),
                go,
                (pos, 1),
                &cols,
                (1, pos),
                T::one(),
                gw.data_mut(),
                (patch, 1),
            );
        }
        if let Some(gx) = &mut gx {
            // dcols = W^T * dY
            T::gemm(
                patch,
                geo.cout,
                pos,
                T::one(),
                vw.data(),
                (1, patch),
                go,
                (pos, 1),
                T::zero(),
                &mut cols,
                (pos, 1),
            );
            col2im(
                &geo,
                &cols,
                &mut gx.data_mut()[i * in_sample..(i + 1) * in_sample],
            );
        }
    }

    let mut out = Vec::with_capacity(3);
    if let Some(gx) = gx {
        out.push((args.input, gx));
    }
    if let Some(gw) = gw {
        out.push((args.weight, gw));
    }
    if let Some(b) = args.bias {
        let mut gb = Tensor::zeros(&[geo.cout]);
        for (j, row) in g.data().chunks(pos).enumerate() {
            let c = j % geo.cout;
            gb.data_mut()[c] = row.iter().fold(gb.data()[c], |a, &v| a + v);
        }
        out.push((b, gb));
    }
    out
}
