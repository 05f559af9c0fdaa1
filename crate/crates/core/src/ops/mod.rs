//! Differentiable tensor operations.
//!
//! Every function takes the tape first, validates shapes, computes the
//! forward value (rejecting non-finite results), and registers a backward
//! closure when the tape is recording and an input is traced. Backward
//! kernels accumulate with `+=` in a fixed element order, so gradients
//! are deterministic and inputs may be reused freely.

mod act;
mod basic;
mod conv;
mod involution;
mod kern;
mod loss;
mod norm;
mod shuffle;

pub use act::{leaky_relu, relu, sigmoid};
pub use basic::{
    add, add_scalar, clamp, concat_channels, elementwise, mean, mul, mul_scalar, permute,
    reshape, sub, sum, ElemOp,
};
pub use conv::{bsconv, conv2d, unfold};
pub use involution::{involution, involution_apply};
pub use loss::mae_loss;
pub use norm::{batch_norm_eval, batch_norm_train, channel_stats};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};
