//! Element types the engine can compute in.
//!
//! Training and inference run in `f32`; gradient checking runs the same
//! generic code in `f64` so finite differences have headroom.

use core::fmt::{Debug, Display};
use core::iter::Sum;

use num_traits::Float;

/// Runtime tag for an element type, used by serialized tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// Stable one-byte code used in the checkpoint container.
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }
}

/// Floating-point element type usable by tensors and kernels.
///
/// `Float` (via libm) supplies all transcendental functions without std,
/// so kernels behave identically in `no_std` builds.
pub trait Scalar:
    Float + Debug + Display + Default + Sum + Send + Sync + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}

/// Deterministic 8-lane sum: splits the input into eight interleaved
/// partial sums and folds them in a fixed order. The lane pattern gives
/// the optimizer independent accumulators (so reductions vectorize) while
/// keeping results bit-identical run to run.
pub fn sum_lanes<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for l in 0..8 {
            acc[l] = acc[l] + c[l];
        }
    }
    for (l, &v) in chunks.remainder().iter().enumerate() {
        acc[l] = acc[l] + v;
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    (s01 + s23) + (s45 + s67)
}

/// Deterministic 8-lane dot product; same lane discipline as [`sum_lanes`].
pub fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    for (l, (&xa, &xb)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        acc[l] = acc[l] + xa * xb;
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    (s01 + s23) + (s45 + s67)
}

/// Four dot products against a shared left operand in one pass over `a`.
///
/// Each product keeps its own lane accumulators with the exact chunking
/// and reduction tree of [`dot_lanes`], so `dot_lanes4(a, [b0, b1, b2, b3])`
/// is bit-identical to four separate `dot_lanes` calls.
pub fn dot_lanes4<T: Scalar>(a: &[T], bs: [&[T]; 4]) -> [T; 4] {
    let n = a.len();
    let mut acc = [[T::zero(); 8]; 4];
    let mut base = 0;
    while base + 8 <= n {
        for (j, b) in bs.iter().enumerate() {
            let (xa, xb) = (&a[base..base + 8], &b[base..base + 8]);
            for l in 0..8 {
                acc[j][l] = acc[j][l] + xa[l] * xb[l];
            }
        }
        base += 8;
    }
    for (l, i) in (base..n).enumerate() {
        for (j, b) in bs.iter().enumerate() {
            acc[j][l] = acc[j][l] + a[i] * b[i];
        }
    }
    let mut out = [T::zero(); 4];
    for (o, lane) in out.iter_mut().zip(acc) {
        let s01 = lane[0] + lane[1];
        let s23 = lane[2] + lane[3];
        let s45 = lane[4] + lane[5];
        let s67 = lane[6] + lane[7];
        *o = (s01 + s23) + (s45 + s67);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_sum_matches_naive_in_f64() {
        let xs: Vec<f64> = (0..103).map(|i| (i as f64) * 0.37 - 19.0).collect();
        let naive: f64 = xs.iter().sum();
        assert!((sum_lanes(&xs) - naive).abs() < 1e-9);
    }

    #[test]
    fn lane_dot_matches_naive_in_f64() {
        let a: Vec<f64> = (0..61).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..61).map(|i| (i as f64 * 0.7).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot_lanes(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn lane_sum_is_deterministic() {
        let xs: Vec<f32> = (0..1000).map(|i| ((i * 2654435761u64 as usize) as f32).sin()).collect();
        assert_eq!(sum_lanes(&xs).to_bits(), sum_lanes(&xs).to_bits());
    }

    #[test]
    fn fused_dot_matches_four_separate_dots_bitwise() {
        // Lengths straddle the 8-lane chunk boundary to cover remainders.
        for n in [5usize, 8, 43, 64] {
            let a: Vec<f32> = (0..n).map(|i| (i as f32 * 0.31).sin()).collect();
            let bs: Vec<Vec<f32>> = (0..4)
                .map(|j| (0..n).map(|i| ((i + 7 * j) as f32 * 0.53).cos()).collect())
                .collect();
            let fused = dot_lanes4(&a, [&bs[0], &bs[1], &bs[2], &bs[3]]);
            for j in 0..4 {
                assert_eq!(fused[j].to_bits(), dot_lanes(&a, &bs[j]).to_bits());
            }
        }
    }
}
