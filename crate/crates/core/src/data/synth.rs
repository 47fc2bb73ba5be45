//! Synthetic CT-like volumes.
//!
//! Each case is an elliptical body cross-section holding two ellipsoidal
//! lung fields, plus Gaussian noise. Positive cases add one or more bright
//! spheroidal opacities inside the lungs, each spanning a contiguous slab of
//! at least `min_slab_thickness` slices within the central part of the
//! lung's craniocaudal extent.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::{hash64, Rng};

use super::manifest::{save_manifest, CaseRecord, DatasetManifest, Label, Split};
use super::volume::{save_volume, Volume};

#[derive(Clone, Debug, PartialEq)]
pub struct LesionSpec {
    /// Inclusive range of lesions per positive case.
    pub count_range: (usize, usize),
    /// In-plane radius range, voxels.
    pub radius_range: (f64, f64),
    pub intensity_delta: f64,
    pub min_slab_thickness: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_cases: usize,
    pub positive_fraction: f64,
    /// Inclusive slice-count range.
    pub depth_range: (usize, usize),
    pub slice_size: usize,
    pub lesion: LesionSpec,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_cases: 32,
            positive_fraction: 0.5,
            depth_range: (24, 56),
            slice_size: 48,
            lesion: LesionSpec {
                count_range: (1, 3),
                radius_range: (3.0, 6.0),
                intensity_delta: 0.35,
                min_slab_thickness: 8,
            },
            noise_std: 0.04,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (dmin, dmax) = self.depth_range;
        let l = &self.lesion;
        if !(1 <= dmin && dmin <= dmax && dmax <= 1000) {
            return bad(format!(
                "depth range {dmin}..={dmax} must lie within 1..=1000"
            ));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return bad(format!(
                "positive fraction {} outside [0,1]",
                self.positive_fraction
            ));
        }
        if self.n_cases == 0 || self.slice_size < 8 {
            return bad("need at least one case and slices of at least 8x8".into());
        }
        if l.count_range.0 == 0 || l.count_range.0 > l.count_range.1 {
            return bad(format!("bad lesion count range {:?}", l.count_range));
        }
        if !(l.radius_range.0 > 0.0 && l.radius_range.0 <= l.radius_range.1) {
            return bad(format!("bad lesion radius range {:?}", l.radius_range));
        }
        if l.min_slab_thickness == 0 || dmin < l.min_slab_thickness + 1 {
            return bad(format!(
                "minimum depth {dmin} cannot hold a {}-slice lesion slab",
                l.min_slab_thickness
            ));
        }
        if !(self.noise_std >= 0.0 && l.intensity_delta > 0.0) {
            return bad("noise must be non-negative and lesion delta positive".into());
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        (self.n_cases as f64 * self.positive_fraction).round() as usize
    }
}

/// One spheroidal opacity, as placed by the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Lesion {
    pub cz: usize,
    pub cy: usize,
    pub cx: usize,
    pub radius: f64,
    /// The lesion column through `(cy, cx)` covers `cz - half_depth ..= cz + half_depth`.
    pub half_depth: usize,
}

impl Lesion {
    pub fn slab(&self) -> RangeInclusive<usize> {
        self.cz - self.half_depth..=self.cz + self.half_depth
    }

    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let dz = (z as f64 - self.cz as f64) / (self.half_depth as f64 + 0.5);
        let dy = (y as f64 - self.cy as f64) / self.radius;
        let dx = (x as f64 - self.cx as f64) / self.radius;
        dz * dz + dy * dy + dx * dx <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Ellipsoid {
    center: [f64; 3],
    semi: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        [z, y, x]
            .iter()
            .zip(self.center.iter().zip(&self.semi))
            .map(|(&p, (&c, &s))| ((p as f64 - c) / s).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Noise-free description of a synthetic case.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub depth: usize,
    pub size: usize,
    body_semi: (f64, f64),
    body_intensity: f64,
    lungs: [Ellipsoid; 2],
    lung_intensity: f64,
    pub lesions: Vec<Lesion>,
    pub intensity_delta: f64,
}

impl Phantom {
    fn in_body(&self, y: usize, x: usize) -> bool {
        let c = (self.size as f64 - 1.0) / 2.0;
        let dy = (y as f64 - c) / self.body_semi.0;
        let dx = (x as f64 - c) / self.body_semi.1;
        dy * dy + dx * dx <= 1.0
    }

    pub fn in_lung(&self, z: usize, y: usize, x: usize) -> bool {
        self.lungs.iter().any(|l| l.contains(z, y, x))
    }

    pub fn in_lesion(&self, z: usize, y: usize, x: usize) -> bool {
        self.lesions.iter().any(|l| l.contains(z, y, x))
    }

    /// Intensity without lesions or noise.
    pub fn background(&self, z: usize, y: usize, x: usize) -> f64 {
        if self.in_lung(z, y, x) {
            // denser toward the dependent (higher y) side
            self.lung_intensity + 0.05 * y as f64 / self.size as f64
        } else if self.in_body(y, x) {
            self.body_intensity
        } else {
            0.0
        }
    }

    pub fn clean(&self, z: usize, y: usize, x: usize) -> f64 {
        let bump = if self.in_lesion(z, y, x) {
            self.intensity_delta
        } else {
            0.0
        };
        self.background(z, y, x) + bump
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCase {
    pub volume: Volume,
    pub phantom: Phantom,
}

fn place_lesion(rng: &mut Rng, spec: &SynthSpec, depth: usize, lung: &Ellipsoid) -> Lesion {
    let l = &spec.lesion;
    let mut half = l.min_slab_thickness / 2;
    if 2 * (half + 1) < depth && rng.below(2) == 1 {
        half += 1;
    }
    let lo = (0.15 * depth as f64).ceil() as usize + half;
    let hi = ((0.72 * depth as f64).floor() as usize).saturating_sub(half);
    let cz = if lo <= hi {
        rng.int_in(lo, hi)
    } else {
        (depth / 2).clamp(half, depth - 1 - half)
    };
    let max = spec.slice_size - 1;
    let jitter = |rng: &mut Rng, c: f64, s: f64, f: f64| {
        (c + rng.uniform_in(-f, f) * s)
            .round()
            .clamp(0.0, max as f64) as usize
    };
    let cy = jitter(rng, lung.center[1], lung.semi[1], 0.5);
    let cx = jitter(rng, lung.center[2], lung.semi[2], 0.4);
    Lesion {
        cz,
        cy,
        cx,
        radius: rng.uniform_in(l.radius_range.0, l.radius_range.1),
        half_depth: half,
    }
}

/// Builds one case from its own seed stream. Pure in `(spec, case_id, label)`.
pub fn synthesize_case(spec: &SynthSpec, case_id: &str, label: Label) -> Result<SyntheticCase> {
    spec.validate()?;
    let mut rng = Rng::new(hash64(spec.seed, case_id, 0));
    let depth = rng.int_in(spec.depth_range.0, spec.depth_range.1);
    let s = spec.slice_size as f64;
    let c = (s - 1.0) / 2.0;
    let mut j = |lo: f64, hi: f64| rng.uniform_in(lo, hi);

    let body_semi = (0.38 * s * j(0.95, 1.05), 0.46 * s * j(0.95, 1.05));
    let lung_semi = |j: &mut dyn FnMut(f64, f64) -> f64| {
        [
            0.48 * depth as f64,
            0.26 * s * j(0.9, 1.1),
            0.14 * s * j(0.9, 1.1),
        ]
    };
    let zc = (depth as f64 - 1.0) / 2.0;
    let offset = 0.21 * s * j(0.95, 1.05);
    let lungs = [
        Ellipsoid {
            center: [zc, c, c - offset],
            semi: lung_semi(&mut j),
        },
        Ellipsoid {
            center: [zc, c, c + offset],
            semi: lung_semi(&mut j),
        },
    ];
    let body_intensity = j(0.5, 0.6);
    let lung_intensity = j(0.08, 0.16);

    let mut lesions = Vec::new();
    if label == Label::Covid {
        let n = rng.int_in(spec.lesion.count_range.0, spec.lesion.count_range.1);
        for _ in 0..n {
            let side = rng.below(2) as usize;
            lesions.push(place_lesion(&mut rng, spec, depth, &lungs[side]));
        }
    }
    let phantom = Phantom {
        depth,
        size: spec.slice_size,
        body_semi,
        body_intensity,
        lungs,
        lung_intensity,
        lesions,
        intensity_delta: spec.lesion.intensity_delta,
    };

    let n = spec.slice_size;
    let mut voxels = Vec::with_capacity(depth * n * n);
    for z in 0..depth {
        for y in 0..n {
            for x in 0..n {
                let v = phantom.clean(z, y, x) + spec.noise_std * rng.normal();
                voxels.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(SyntheticCase {
        volume: Volume::from_f32(depth, n, n, voxels)?,
        phantom,
    })
}

/// Labels for `spec.n_cases` cases: exactly `spec.positives()` positives in
/// seed-determined order.
fn assign_labels(spec: &SynthSpec) -> Vec<Label> {
    let pos = spec.positives();
    let mut labels: Vec<Label> = (0..spec.n_cases)
        .map(|i| {
            if i < pos {
                Label::Covid
            } else {
                Label::NonCovid
            }
        })
        .collect();
    Rng::new(hash64(spec.seed, "labels", 0)).shuffle(&mut labels);
    labels
}

/// Writes `case_NNNN.vol` files and `manifest.csv` into `out_dir`.
pub fn generate_synthetic_dataset(
    spec: &SynthSpec,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::with_capacity(spec.n_cases);
    for (i, label) in assign_labels(spec).into_iter().enumerate() {
        let case_id = format!("case_{i:04}");
        let case = synthesize_case(spec, &case_id, label)?;
        let file = PathBuf::from(format!("{case_id}.vol"));
        save_volume(&case.volume, out_dir.join(&file))?;
        records.push(CaseRecord {
            case_id,
            path: file,
            label: Some(label),
        });
    }
    let manifest = DatasetManifest {
        records,
        split: Split::Train,
        base_dir: out_dir.to_path_buf(),
    };
    save_manifest(&manifest, out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
