//! Error type shared by every engine module.

use alloc::string::String;
use core::fmt;

/// Engine-level failure.
///
/// Every fallible operation reports one of these; the CLI maps them onto
/// process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes disagree with the operation's contract.
    ShapeMismatch { op: &'static str, detail: String },
    /// A structural parameter (channel count, scale, groups, ...) is invalid.
    InvalidConfig(String),
    /// Convolution-style kernels must be square with odd side length.
    UnsupportedKernel { op: &'static str, k: usize },
    /// An operation produced a NaN or infinity.
    NumericFault { op: &'static str },
    /// `backward` was seeded with a tensor that is not a single scalar.
    NotScalar { len: usize },
    /// An optimizer step was requested before any gradients were produced.
    EmptyGrads,
    /// Batch statistics need at least two values per channel.
    DegenerateBatch { count: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => {
                write!(f, "shape mismatch in `{op}`: {detail}")
            }
            Error::InvalidConfig(detail) => write!(f, "invalid configuration: {detail}"),
            Error::UnsupportedKernel { op, k } => {
                write!(f, "`{op}` requires a square odd-sized kernel, got {k}x{k}")
            }
            Error::NumericFault { op } => {
                write!(f, "numeric fault: `{op}` produced a non-finite value")
            }
            Error::NotScalar { len } => {
                write!(f, "backward seed must be a scalar, got {len} elements")
            }
            Error::EmptyGrads => write!(f, "optimizer step requested with no accumulated gradients"),
            Error::DegenerateBatch { count } => {
                write!(f, "batch statistics need at least 2 values per channel, got {count}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Shorthand for building a [`Error::ShapeMismatch`].
#[macro_export]
macro_rules! shape_err {
    ($op:expr, $($arg:tt)*) => {
        $crate::error::Error::ShapeMismatch {
            op: $op,
            detail: alloc::format!($($arg)*),
        }
    };
}

/// Shorthand for building a [`Error::InvalidConfig`].
#[macro_export]
macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidConfig(alloc::format!($($arg)*))
    };
}
