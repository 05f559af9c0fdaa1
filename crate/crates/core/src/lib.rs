//! Self-contained engine for lightweight single-image super-resolution.
//!
//! The crate bundles everything the model needs to train and run without
//! a deep-learning framework: dense tensors, reverse-mode autodiff, the
//! NN operator set (convolution, involution, batch norm, pixel shuffle,
//! ...), the network definition, the optimizer, the degradation pipeline
//! (bicubic resampling, patch sampling, augmentation), and evaluation
//! metrics. Everything is deterministic: a fixed seed reproduces
//! parameter initialization, data order, and arithmetic bit for bit.
//!
//! The crate is `no_std`-compatible (it needs only `alloc`); file I/O,
//! checkpoints, and the command-line interface live in the companion
//! `ibmdn-cli` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod arch;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod img;
pub mod metrics;
pub mod ops;
pub mod optim;
pub mod resample;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use tape::{Grads, NodeId, Tape};
pub use tensor::Tensor;
