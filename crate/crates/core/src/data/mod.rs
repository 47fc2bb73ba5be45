//! Volume files, dataset manifests and the synthetic CT-like generator.

mod manifest;
mod pgm;
mod synth;
mod volume;

pub use manifest::{load_manifest, save_manifest, CaseRecord, DatasetManifest, Label, Split};
pub use pgm::{decode_pgm, encode_pgm, load_pgm_stack, save_pgm_stack, Pgm};
pub use synth::{
    generate_synthetic_dataset, synthesize_case, Lesion, LesionSpec, Phantom, SynthSpec,
    SyntheticCase,
};
pub use volume::{
    decode_vol, encode_vol, load_volume, save_volume, Volume, VoxelType, VOL_MAGIC, VOL_VERSION,
};
