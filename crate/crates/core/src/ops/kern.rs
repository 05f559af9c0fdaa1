//! Tiny slice kernels shared by the op implementations. All of them are
//! plain element-indexed loops that the optimizer can vectorize; none of
//! them reorder accumulation.

use crate::scalar::Scalar;

/// `dst += src`, element by element.
pub(super) fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// `dst += c * src`, element by element.
pub(super) fn axpy<T: Scalar>(dst: &mut [T], c: T, src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + c * s;
    }
}

/// Four fused `axpy` passes: `dst += c0*s0 + c1*s1 + c2*s2 + c3*s3`.
///
/// Per element the additions associate left to right, exactly as four
/// consecutive [`axpy`] calls would; the fusion only cuts the traffic on
/// `dst` and widens the instruction-level parallelism.
pub(super) fn axpy4<T: Scalar>(dst: &mut [T], c: [T; 4], src: [&[T]; 4]) {
    let n = dst.len();
    let (s0, s1, s2, s3) = (&src[0][..n], &src[1][..n], &src[2][..n], &src[3][..n]);
    for i in 0..n {
        dst[i] = dst[i] + c[0] * s0[i] + c[1] * s1[i] + c[2] * s2[i] + c[3] * s3[i];
    }
}

/// `dst += a * b`, element by element (three-stream fused form).
pub(super) fn mul_add_into<T: Scalar>(dst: &mut [T], a: &[T], b: &[T]) {
    debug_assert_eq!(dst.len(), a.len());
    debug_assert_eq!(dst.len(), b.len());
    for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
        *d = *d + x * y;
    }
}
