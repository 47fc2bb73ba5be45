//! Fixed-depth slice resampling and per-slice preprocessing.
//!
//! A volume with `totalnum` slices is reduced (or padded) to exactly
//! `renum_ct` slices. When enough slices exist the indexes are spread
//! uniformly at spacing `totalnum / (renum_ct + 1)`, starting at slice 0;
//! otherwise `renum_ct` indexes are drawn uniformly with replacement and
//! sorted to keep anatomical order. Selected slices are resized to a square
//! grid with align-corners bilinear interpolation and standardized per
//! volume.

use crate::data::Volume;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Uniform,
    Oversample,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplePlan {
    pub indexes: Vec<usize>,
    pub renum_ct: usize,
    pub source_depth: usize,
    pub branch: Branch,
}

/// Chooses `renum_ct` slice indexes out of `totalnum`.
///
/// Uniform branch: `floor(i * totalnum / (renum_ct + 1))`, in exact integer
/// arithmetic, for
/// `i in 0..renum_ct`. The rng is only consulted by the oversample branch.
/// When `totalnum < 2 * renum_ct` the floor can repeat leading indexes.
pub fn plan_indexes(totalnum: usize, renum_ct: usize, rng: &mut Rng) -> Result<SamplePlan> {
    if totalnum == 0 || renum_ct == 0 {
        return Err(Error::InvalidArgument(format!(
            "plan_indexes needs totalnum >= 1 and renum_ct >= 1, got ({totalnum}, {renum_ct})"
        )));
    }
    let (indexes, branch) = if totalnum >= renum_ct {
        // floor(i * diff) evaluated exactly; a float `diff` lands just below
        // exact multiples (45 slices, 32 samples, i = 11 gives 14, not 15).
        let idx = (0..renum_ct)
            .map(|i| i * totalnum / (renum_ct + 1))
            .collect();
        (idx, Branch::Uniform)
    } else {
        let mut idx: Vec<usize> = (0..renum_ct)
            .map(|_| rng.below(totalnum as u64) as usize)
            .collect();
        idx.sort_unstable();
        (idx, Branch::Oversample)
    };
    Ok(SamplePlan {
        indexes,
        renum_ct,
        source_depth: totalnum,
        branch,
    })
}

/// Stacks the planned slices of `volume` into a `[renum_ct, H, W]` tensor.
pub fn apply_plan(volume: &Volume, plan: &SamplePlan) -> Result<Tensor<f32>> {
    if plan.source_depth != volume.depth() {
        return Err(Error::Shape(format!(
            "plan built for depth {} applied to volume of depth {}",
            plan.source_depth,
            volume.depth()
        )));
    }
    let mut data = Vec::with_capacity(plan.renum_ct * volume.height() * volume.width());
    for &i in &plan.indexes {
        data.extend_from_slice(volume.slice(i));
    }
    Tensor::new(vec![plan.renum_ct, volume.height(), volume.width()], data)
}

/// Align-corners source coordinate of destination index `dst`.
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len == 1 || src_len == 1 {
        0.0
    } else {
        (dst * (src_len - 1)) as f64 / (dst_len - 1) as f64
    }
}

/// Lower neighbour and interpolation weight for a source coordinate.
fn taps(coord: f64, len: usize) -> (usize, usize, f64) {
    let lo = (coord.floor() as usize).min(len - 1);
    let hi = (lo + 1).min(len - 1);
    (lo, hi, coord - lo as f64)
}

/// Bilinear resize of an `h x w` slice to `size x size`, align-corners.
///
/// Corner pixels map exactly onto source corners.
pub fn resize_bilinear(slice: &[f32], h: usize, w: usize, size: usize) -> Vec<f32> {
    assert!(h >= 1 && w >= 1 && size >= 1);
    assert_eq!(slice.len(), h * w);
    if h == size && w == size {
        return slice.to_vec();
    }
    let cols: Vec<_> = (0..size)
        .map(|x| taps(source_coord(x, w, size), w))
        .collect();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let (y0, y1, ty) = taps(source_coord(y, h, size), h);
        for &(x0, x1, tx) in &cols {
            let at = |yy: usize, xx: usize| f64::from(slice[yy * w + xx]);
            let top = (1.0 - tx) * at(y0, x0) + tx * at(y0, x1);
            let bottom = (1.0 - tx) * at(y1, x0) + tx * at(y1, x1);
            out.push(((1.0 - ty) * top + ty * bottom) as f32);
        }
    }
    out
}

/// Resizes every slice of a `[C,H,W]` stack to `[C,size,size]`.
pub fn resize_stack(stack: &Tensor<f32>, size: usize) -> Tensor<f32> {
    let &[c, h, w] = stack.shape() else {
        panic!("resize_stack expects [C,H,W], got {:?}", stack.shape());
    };
    let data = stack
        .data()
        .chunks(h * w)
        .flat_map(|s| resize_bilinear(s, h, w, size))
        .collect();
    Tensor::new(vec![c, size, size], data).expect("resized shape")
}

const MIN_STD: f64 = 1e-6;

/// Subtracts the stack mean and divides by its standard deviation
/// (clamped below at 1e-6).
pub fn standardize(stack: &Tensor<f32>) -> Tensor<f32> {
    let n = stack.numel() as f64;
    let mean = stack.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = stack
        .data()
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(MIN_STD);
    stack.map(|v| ((f64::from(v) - mean) / std) as f32)
}

/// Full preprocessing of one volume into a `[renum_ct, size, size]` model input.
pub fn preprocess(
    volume: &Volume,
    renum_ct: usize,
    size: usize,
    rng: &mut Rng,
) -> Result<Tensor<f32>> {
    let plan = plan_indexes(volume.depth(), renum_ct, rng)?;
    let stack = apply_plan(volume, &plan)?;
    Ok(standardize(&resize_stack(&stack, size)))
}
