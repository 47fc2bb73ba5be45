//! CTNet: a hybrid CNN/transformer classifier for 3D CT volumes.
//!
//! The pipeline resamples a variable-depth volume to a fixed number of
//! slices, feeds the slice stack (slices as channels) through a residual CNN
//! with squeeze-and-excitation attention, then classifies the pooled feature
//! vector with a transformer branch and a fully connected branch whose logits
//! are summed before the softmax.
//!
//! Everything runs on a small reverse-mode autodiff core in [`numerics`].

pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod resampling;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
