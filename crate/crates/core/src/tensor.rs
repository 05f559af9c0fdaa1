//! Dense row-major tensors with shared, immutable storage.
//!
//! A tensor is a shape plus an `Arc<[T]>` payload. Cloning is cheap, and
//! every operation produces a fresh tensor, so saved activations on the
//! autodiff tape are just extra references. The optional [`NodeId`] links
//! a value to the tape entry that produced (or watches) it.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape_err;
use crate::tape::NodeId;

#[derive(Clone, Debug)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Arc<[T]>,
    node: Option<NodeId>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from owned data, validating the shape.
    ///
    /// Every extent must be at least 1 and the extents must multiply to
    /// `data.len()`.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(shape_err!("tensor", "extents must all be >= 1, got {shape:?}"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_err!(
                "tensor",
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            ));
        }
        Ok(Tensor { shape, data: data.into(), node: None })
    }

    /// Like [`Tensor::from_vec`], but additionally rejects non-finite
    /// values. All compute kernels construct their outputs through this,
    /// which is what turns a NaN/Inf anywhere in the forward pass into an
    /// immediate [`Error::NumericFault`].
    pub(crate) fn from_op(op: &'static str, shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFault { op });
        }
        Tensor::from_vec(shape, data)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![value; numel])
    }

    /// Uniform values in `[lo, hi)`, deterministic in `seed`.
    pub fn uniform(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::uniform_from(shape, lo, hi, &mut rng)
    }

    /// Uniform values in `[lo, hi)` drawn from a caller-owned stream; used
    /// by parameter initialization so one seed covers a whole model.
    // The negated comparison rejects NaN bounds, which `lo >= hi` would
    // let through.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn uniform_from(
        shape: impl Into<Vec<usize>>,
        lo: f64,
        hi: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(lo < hi) {
            return Err(crate::config_err!("uniform bounds must satisfy lo < hi, got [{lo}, {hi})"));
        }
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        // Always sample in f64 so f32 and f64 tensors see the same stream.
        let data: Vec<T> = (0..numel)
            .map(|_| T::from_f64(rng.gen_range(lo..hi)))
            .collect();
        Tensor::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // shapes with a zero extent are rejected at construction
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.to_vec()
    }

    /// Tape node that produced this value, if it is being traced.
    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub(crate) fn with_node(mut self, node: Option<NodeId>) -> Self {
        self.node = node;
        self
    }

    /// Same storage, no tape link: gradients will not flow through the
    /// returned tensor.
    pub fn detach(&self) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.clone(), node: None }
    }

    /// Same storage under a different shape; the caller guarantees the
    /// element count matches. Used by `reshape`.
    pub(crate) fn share_with_shape(&self, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), self.len());
        Tensor { shape, data: self.data.clone(), node: None }
    }

    /// The four extents of an NCHW tensor.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(shape_err!(op, "expected a rank-4 NCHW tensor, got shape {:?}", self.shape)),
        }
    }

    /// The single value of a one-element tensor.
    pub fn scalar_value(&self) -> Result<T> {
        if self.len() != 1 {
            return Err(Error::NotScalar { len: self.len() });
        }
        Ok(self.data[0])
    }

    /// Element-for-element conversion to another scalar type. The result
    /// is detached from any tape.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data: Vec<U> = self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect();
        Tensor { shape: self.shape.clone(), data: data.into(), node: None }
    }
}

/// Row-major strides for a shape.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_shape() {
        assert!(Tensor::<f32>::from_vec(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f32>::from_vec(vec![2, 0], vec![]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::from_vec(vec![2, 3], vec![0.0; 5]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::from_vec(Vec::<usize>::new(), vec![]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn from_op_rejects_non_finite() {
        let err = Tensor::<f32>::from_op("demo", vec![3], vec![1.0, f32::NAN, 0.0]);
        assert_eq!(err.unwrap_err(), Error::NumericFault { op: "demo" });
        let err = Tensor::<f64>::from_op("demo", vec![1], vec![f64::INFINITY]);
        assert_eq!(err.unwrap_err(), Error::NumericFault { op: "demo" });
    }

    #[test]
    fn uniform_is_deterministic_and_bounded() {
        let a = Tensor::<f32>::uniform(vec![4, 5], -0.25, 0.25, 7).unwrap();
        let b = Tensor::<f32>::uniform(vec![4, 5], -0.25, 0.25, 7).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
        assert!(a.data().iter().all(|&v| (-0.25..0.25).contains(&v)));
        let c = Tensor::<f32>::uniform(vec![4, 5], -0.25, 0.25, 8).unwrap();
        assert_ne!(a.to_vec(), c.to_vec());
    }

    #[test]
    fn uniform_stream_is_dtype_agnostic() {
        let a = Tensor::<f32>::uniform(vec![10], -1.0, 1.0, 3).unwrap();
        let b = Tensor::<f64>::uniform(vec![10], -1.0, 1.0, 3).unwrap();
        for (&x, &y) in a.data().iter().zip(b.data()) {
            assert_eq!(x, y as f32);
        }
    }

    #[test]
    fn strides_are_row_major() {
        assert_eq!(strides_of(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides_of(&[5]), vec![1]);
    }

    #[test]
    fn cast_roundtrip_preserves_f32_values() {
        let a = Tensor::<f32>::uniform(vec![7], -2.0, 2.0, 11).unwrap();
        let back: Tensor<f32> = a.cast::<f64>().cast();
        assert_eq!(a.to_vec(), back.to_vec());
    }
}
