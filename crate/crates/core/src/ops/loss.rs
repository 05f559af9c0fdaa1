//! Training loss.

use alloc::vec;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Mean absolute error over all elements, as a `[1]`-shaped tensor.
///
/// The subgradient at exact ties (`pred == target`) is taken as zero.
pub fn mae_loss<T: Scalar>(
    tape: &mut Tape<T>,
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(shape_err!(
            "mae_loss",
            "prediction {:?} and target {:?} must match",
            pred.shape(),
            target.shape()
        ));
    }
    let n_t = T::from_usize(pred.len());
    let (pd, td) = (pred.data(), target.data());

    // Deterministic 8-lane reduction, same discipline as `sum_lanes`.
    let mut lane = [T::zero(); 8];
    let mut cp = pd.chunks_exact(8);
    let mut ct = td.chunks_exact(8);
    for (a, b) in (&mut cp).zip(&mut ct) {
        for l in 0..8 {
            lane[l] = lane[l] + (a[l] - b[l]).abs();
        }
    }
    for (l, (&a, &b)) in cp.remainder().iter().zip(ct.remainder()).enumerate() {
        lane[l] = lane[l] + (a - b).abs();
    }
    let s01 = lane[0] + lane[1];
    let s23 = lane[2] + lane[3];
    let s45 = lane[4] + lane[5];
    let s67 = lane[6] + lane[7];
    let loss = ((s01 + s23) + (s45 + s67)) / n_t;
    let out = Tensor::from_op("mae_loss", vec![1], vec![loss])?;

    let (pn, tn) = (pred.node(), target.node());
    Ok(tape.record(out, &[pn, tn], || {
        let pred = pred.clone();
        let target = target.clone();
        Box::new(move |g, acc| {
            let (pd, td) = (pred.data(), target.data());
            let step = g[0] / n_t;
            if let Some(pid) = pn {
                acc.accumulate(pid, pd.len(), |gp| {
                    for ((d, &a), &b) in gp.iter_mut().zip(pd).zip(td) {
                        let s = if a > b {
                            step
                        } else if a < b {
                            T::zero() - step
                        } else {
                            T::zero()
                        };
                        *d = *d + s;
                    }
                });
            }
            if let Some(tid) = tn {
                acc.accumulate(tid, td.len(), |gt| {
                    for ((d, &a), &b) in gt.iter_mut().zip(pd).zip(td) {
                        let s = if a > b {
                            step
                        } else if a < b {
                            T::zero() - step
                        } else {
                            T::zero()
                        };
                        *d = *d - s;
                    }
                });
            }
        })
    }))
}
