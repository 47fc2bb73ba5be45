//! The CTNet network: slice-channel stem, SE-residual stages, pooled
//! features feeding a transformer branch and an FC branch whose logits are
//! summed before the softmax.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CKPT_MAGIC,
    CKPT_VERSION,
};
pub use config::{ModelConfig, NORM_GROUPS};
pub use network::{
    fc_branch, forward, fuse_and_predict, se_attention, se_residual_block, transformer_branch,
    ForwardOutput, HeadMode, Prediction,
};
pub use params::{build_model, param_shapes, BoundParams, ModelParams};
