//! Pointwise activations.

use alloc::vec::Vec;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// `max(x, alpha * x)` with slope `alpha` on the negative side. The
/// derivative at exactly 0 is taken as 1.
pub fn leaky_relu<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    let out: Vec<T> = x
        .data()
        .iter()
        .map(|&v| if v >= T::zero() { v } else { alpha * v })
        .collect();
    let out = Tensor::from_op("leaky_relu", x.shape().to_vec(), out)?;
    let xn = x.node();
    Ok(tape.record(out, &[xn], || {
        let x = x.clone();
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, x.len(), |gx| {
                for ((d, &gi), &v) in gx.iter_mut().zip(g).zip(x.data()) {
                    let slope = if v >= T::zero() { T::one() } else { alpha };
                    *d = *d + gi * slope;
                }
            });
        })
    }))
}

/// `max(x, 0)`; shares the leaky implementation with a zero slope.
pub fn relu<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    leaky_relu(tape, x, T::zero())
}

/// Logistic function `1 / (1 + exp(-x))`.
pub fn sigmoid<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let out: Vec<T> = x
        .data()
        .iter()
        .map(|&v| T::one() / (T::one() + (-v).exp()))
        .collect();
    let out = Tensor::from_op("sigmoid", x.shape().to_vec(), out)?;
    let xn = x.node();
    // The saved output is enough for the backward: dy/dx = y * (1 - y).
    let y = out.detach();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, y.len(), |gx| {
                for ((d, &gi), &yv) in gx.iter_mut().zip(g).zip(y.data()) {
                    *d = *d + gi * yv * (T::one() - yv);
                }
            });
        })
    }))
}
