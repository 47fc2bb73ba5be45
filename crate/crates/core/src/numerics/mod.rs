//! Dense tensors and a reverse-mode differentiation tape.
//!
//! Values live on a [`Tape`]; every operation appends a node recording its
//! inputs, and [`Tape::backward`] walks the nodes in reverse accumulating
//! gradients. Operations are generic over [`Scalar`] so the same network code
//! runs in `f32` for training and `f64` for finite-difference checks.

mod activation;
mod conv;
mod gradcheck;
mod linalg;
mod loss;
mod norm;
mod shape_ops;
mod tape;
mod tensor;

pub use activation::Activation;
pub use gradcheck::grad_check;
pub use norm::NormMode;
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};

/// Epsilon used by every normalization layer.
pub const NORM_EPS: f64 = 1e-5;
