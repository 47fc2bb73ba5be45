//! WebAssembly bindings for an in-browser look at the preprocessing pipeline:
//! the slice sampling plan, individual synthetic slices, and the resampled,
//! resized and standardized model input laid out as a montage.
//!
//! The plain Rust methods (`build`, `plan`, `montage`, ...) hold the logic and
//! are tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use ctnet::data::{synthesize_case, Label, SynthSpec, SyntheticCase};
use ctnet::resampling::{apply_plan, plan_indexes, resize_stack, standardize, SamplePlan};
use ctnet::Rng;
use wasm_bindgen::prelude::*;

fn js(e: ctnet::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn plan(totalnum: usize, renum_ct: usize, seed: u32) -> ctnet::Result<SamplePlan> {
    plan_indexes(totalnum, renum_ct, &mut Rng::new(u64::from(seed)))
}

/// Slice indexes chosen for a scan of `totalnum` slices.
#[wasm_bindgen(js_name = samplePlan)]
pub fn sample_plan(totalnum: u32, renum_ct: u32, seed: u32) -> Result<Vec<u32>, JsError> {
    let p = plan(totalnum as usize, renum_ct as usize, seed).map_err(js)?;
    Ok(p.indexes.iter().map(|&i| i as u32).collect())
}

/// Grayscale RGBA pixels for values already in `[0, 1]`.
pub fn gray_rgba(values: &[f32]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

/// A synthetic scan held in memory.
#[wasm_bindgen]
pub struct Scan {
    case: SyntheticCase,
}

impl Scan {
    pub fn build(seed: u32, covid: bool, depth: usize, size: usize) -> ctnet::Result<Self> {
        let spec = SynthSpec {
            n_cases: 1,
            depth_range: (depth, depth),
            slice_size: size,
            seed: u64::from(seed),
            ..SynthSpec::default()
        };
        let label = if covid { Label::Covid } else { Label::NonCovid };
        Ok(Self {
            case: synthesize_case(&spec, "demo", label)?,
        })
    }

    /// Slice `z` as RGBA, with lesion voxels tinted red when `overlay` is set.
    pub fn slice_pixels(&self, z: usize, overlay: bool) -> Vec<u8> {
        let v = &self.case.volume;
        let z = z.min(v.depth() - 1);
        let mut px = gray_rgba(v.slice(z));
        if overlay {
            for y in 0..v.height() {
                for x in 0..v.width() {
                    if self.case.phantom.in_lesion(z, y, x) {
                        let i = 4 * (y * v.width() + x);
                        px[i] = px[i].saturating_add(90);
                        px[i + 1] /= 2;
                        px[i + 2] /= 2;
                    }
                }
            }
        }
        px
    }

    /// Resampled, resized and standardized slices tiled `columns` per row,
    /// contrast-stretched to the stack's own range.
    pub fn montage(
        &self,
        renum_ct: usize,
        size: usize,
        seed: u32,
        columns: usize,
    ) -> ctnet::Result<Vec<u8>> {
        let p = plan(self.case.volume.depth(), renum_ct, seed)?;
        let stack = standardize(&resize_stack(&apply_plan(&self.case.volume, &p)?, size));
        let (lo, hi) = stack
            .data()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        let columns = columns.clamp(1, renum_ct);
        let rows = renum_ct.div_ceil(columns);
        let width = columns * size;
        let mut out = vec![0u8; 4 * width * rows * size];
        for (c, tile) in stack.data().chunks(size * size).enumerate() {
            let (ty, tx) = (c / columns, c % columns);
            for y in 0..size {
                let row: Vec<f32> = tile[y * size..(y + 1) * size]
                    .iter()
                    .map(|&v| (v - lo) / span)
                    .collect();
                let start = 4 * ((ty * size + y) * width + tx * size);
                out[start..start + 4 * size].copy_from_slice(&gray_rgba(&row));
            }
        }
        Ok(out)
    }
}

#[wasm_bindgen]
impl Scan {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, covid: bool, depth: u32, size: u32) -> Result<Scan, JsError> {
        Self::build(seed, covid, depth as usize, size as usize).map_err(js)
    }

    pub fn depth(&self) -> u32 {
        self.case.volume.depth() as u32
    }

    pub fn size(&self) -> u32 {
        self.case.volume.width() as u32
    }

    /// Slices that contain at least one lesion voxel.
    #[wasm_bindgen(js_name = lesionSlices)]
    pub fn lesion_slices(&self) -> Vec<u32> {
        let mut zs: Vec<u32> = self
            .case
            .phantom
            .lesions
            .iter()
            .flat_map(|l| l.slab().map(|z| z as u32))
            .collect();
        zs.sort_unstable();
        zs.dedup();
        zs
    }

    #[wasm_bindgen(js_name = slicePixels)]
    pub fn slice_pixels_js(&self, z: u32, overlay: bool) -> Vec<u8> {
        self.slice_pixels(z as usize, overlay)
    }

    #[wasm_bindgen(js_name = montagePixels)]
    pub fn montage_js(
        &self,
        renum_ct: u32,
        size: u32,
        seed: u32,
        columns: u32,
    ) -> Result<Vec<u8>, JsError> {
        self.montage(renum_ct as usize, size as usize, seed, columns as usize)
            .map_err(js)
    }
}
